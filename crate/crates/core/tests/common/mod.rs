#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use wardsource_core::genomics::Alignment;
use wardsource_core::ingest::{CaseRow, LocationRow, WeightRow};
use wardsource_core::{ModelParams, WardInput, WardSnapshot};

pub fn day(d: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + Duration::days(d)
}

pub struct WardBuilder {
    input: WardInput,
    seqs: Vec<(String, String)>,
}

impl WardBuilder {
    pub fn new(end: i64) -> Self {
        let params = ModelParams {
            epidemic_end: Some(day(end)),
            ..ModelParams::default()
        };
        WardBuilder {
            input: WardInput {
                cases: vec![],
                locations: vec![],
                weights: vec![],
                alignment: None,
                params,
            },
            seqs: vec![],
        }
    }

    pub fn case(mut self, id: &str, onset: i64, admission: Option<i64>, sample: Option<i64>) -> Self {
        self.input.cases.push(CaseRow {
            id: id.into(),
            onset_date: day(onset),
            admission_date: admission.map(day),
            sample_date: sample.map(day),
        });
        self
    }

    pub fn at(mut self, id: &str, days: impl IntoIterator<Item = i64>, code: &str) -> Self {
        for d in days {
            self.input.locations.push(LocationRow {
                id: id.into(),
                date: day(d),
                location_code: code.into(),
            });
        }
        self
    }

    pub fn weight(mut self, a: &str, b: &str, d: i64, w: f64) -> Self {
        self.input.weights.push(WeightRow {
            id_a: a.into(),
            id_b: b.into(),
            date: day(d),
            weight: w,
        });
        self
    }

    pub fn sequence(mut self, id: &str, seq: String) -> Self {
        self.seqs.push((id.into(), seq));
        self
    }

    pub fn params(mut self, f: impl FnOnce(&mut ModelParams)) -> Self {
        f(&mut self.input.params);
        self
    }

    pub fn build(mut self) -> WardSnapshot {
        if !self.seqs.is_empty() {
            self.input.alignment = Some(Alignment::from_records(self.seqs).unwrap());
        }
        WardSnapshot::build(self.input).unwrap().0
    }
}

/// A pseudo-random genome and a copy with `snps` substitutions at evenly spaced sites.
pub fn genome(len: usize, seed: u64) -> String {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            b"ACGT"[(x >> 62) as usize] as char
        })
        .collect()
}

pub fn with_snps(base: &str, snps: usize) -> String {
    let mut bytes = base.as_bytes().to_vec();
    let step = bytes.len() / (snps + 1);
    for k in 1..=snps {
        let i = k * step;
        bytes[i] = match bytes[i] {
            b'A' => b'C',
            b'C' => b'G',
            b'G' => b'T',
            _ => b'A',
        };
    }
    String::from_utf8(bytes).unwrap()
}
