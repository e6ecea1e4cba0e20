//! Seeded synthetic wards for tests, benchmarks and the demo.

use chrono::Duration;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::genomics::Alignment;
use crate::ingest::{CaseRow, LocationRow, ModelParams, WardInput, WardSnapshot, WeightRow};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Number of cases besides the first; the ward has `candidates + 1` cases.
    pub candidates: usize,
    /// Length of the modelled period.
    pub days: i64,
    /// Zero disables sequencing entirely.
    pub genome_length: usize,
    pub sequenced_fraction: f64,
    pub admitted_fraction: f64,
    /// Probability that a case's location is recorded on a day it is on the ward.
    pub location_coverage: f64,
    pub location_codes: usize,
    /// Number of elicited pair/day contact weights.
    pub weights: usize,
    pub params: ModelParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            candidates: 8,
            days: 40,
            genome_length: 1000,
            sequenced_fraction: 0.8,
            admitted_fraction: 0.7,
            location_coverage: 0.6,
            location_codes: 4,
            weights: 4,
            params: ModelParams::default(),
        }
    }
}

const BASES: [u8; 4] = *b"ACGT";

fn mutate(rng: &mut ChaCha8Rng, seq: &mut [u8], count: usize) {
    for _ in 0..count {
        let site = rng.random_range(0..seq.len());
        let current = seq[site];
        let replacement = *BASES
            .iter()
            .filter(|b| **b != current)
            .collect::<Vec<_>>()
            .choose(rng)
            .expect("three alternatives");
        seq[site] = *replacement;
    }
}

/// Generates the dated input rows of a synthetic ward.
pub fn synthetic_input(config: &SynthConfig) -> WardInput {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let days = config.days.max(2);
    let start = config.params.epidemic_start;
    let date = |d: i64| start + Duration::days(d);
    let n = config.candidates + 1;
    let width = n.to_string().len();
    let ids: Vec<String> = (1..=n).map(|i| format!("case{i:0width$}")).collect();

    let mut cases = Vec::with_capacity(n);
    let mut stays = Vec::with_capacity(n);
    let mut sequenced = Vec::with_capacity(n);
    for id in &ids {
        let onset = rng.random_range(1..days);
        let admission = if rng.random_bool(config.admitted_fraction) {
            Some((onset - rng.random_range(0..12)).max(0))
        } else {
            None
        };
        let has_seq = config.genome_length > 0 && rng.random_bool(config.sequenced_fraction);
        let sample = if has_seq && rng.random_bool(0.85) {
            Some((onset + rng.random_range(0..4)).min(days - 1))
        } else {
            None
        };
        cases.push(CaseRow {
            id: id.clone(),
            onset_date: date(onset),
            admission_date: admission.map(date),
            sample_date: sample.map(date),
        });
        let first = admission.unwrap_or((onset - 5).max(0));
        stays.push((first, (onset + 6).min(days - 1)));
        sequenced.push(has_seq);
    }

    let alignment = if config.genome_length > 0 && sequenced.iter().any(|s| *s) {
        let reference: Vec<u8> = (0..config.genome_length).map(|_| *BASES.choose(&mut rng).unwrap()).collect();
        let lineages: Vec<Vec<u8>> = (0..3)
            .map(|_| {
                let mut l = reference.clone();
                let count = rng.random_range(2..12);
                mutate(&mut rng, &mut l, count);
                l
            })
            .collect();
        let mut records = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            if !sequenced[i] {
                continue;
            }
            let mut seq = lineages.choose(&mut rng).unwrap().clone();
            let count = rng.random_range(0..4);
            mutate(&mut rng, &mut seq, count);
            if rng.random_bool(0.3) {
                let from = rng.random_range(0..seq.len());
                let to = (from + seq.len() / 20 + 1).min(seq.len());
                seq[from..to].fill(b'N');
            }
            records.push((id.clone(), String::from_utf8(seq).expect("ascii")));
        }
        Some(Alignment::from_records(records).expect("synthetic alignment is valid"))
    } else {
        None
    };

    let codes: Vec<String> = (1..=config.location_codes.max(1)).map(|i| format!("bay{i}")).collect();
    let mut locations = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let (first, last) = stays[i];
        let mut code = codes.choose(&mut rng).unwrap().clone();
        for d in first..=last {
            if rng.random_bool(0.15) {
                code = codes.choose(&mut rng).unwrap().clone();
            }
            if rng.random_bool(config.location_coverage) {
                locations.push(LocationRow {
                    id: id.clone(),
                    date: date(d),
                    location_code: code.clone(),
                });
            }
        }
    }

    let mut weights = Vec::new();
    if n > 1 {
        for _ in 0..config.weights {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            weights.push(WeightRow {
                id_a: ids[a].clone(),
                id_b: ids[b].clone(),
                date: date(rng.random_range(0..days)),
                weight: (rng.random_range(0..=20) as f64) / 20.0,
            });
        }
        weights.sort_by(|x, y| (&x.id_a, &x.id_b, x.date).cmp(&(&y.id_a, &y.id_b, y.date)));
        weights.dedup_by(|x, y| {
            let (xa, xb) = if x.id_a < x.id_b { (&x.id_a, &x.id_b) } else { (&x.id_b, &x.id_a) };
            let (ya, yb) = if y.id_a < y.id_b { (&y.id_a, &y.id_b) } else { (&y.id_b, &y.id_a) };
            xa == ya && xb == yb && x.date == y.date
        });
    }

    let mut params = config.params.clone();
    params.epidemic_end = Some(date(days - 1));
    WardInput {
        cases,
        locations,
        weights,
        alignment,
        params,
    }
}

/// Generates and validates a synthetic ward.
pub fn synthetic_ward(config: &SynthConfig) -> WardSnapshot {
    WardSnapshot::build(synthetic_input(config))
        .expect("synthetic ward is valid")
        .0
}
