//! Versioned machine-readable reports: posterior records, ablation stages and
//! heatmap matrices, as JSON or CSV.
//!
//! Row order is the engine's report order (candidates by id, then hospital,
//! then community). Log-likelihoods of impossible hypotheses are written as
//! `null` in JSON and `-inf` in CSV. Floats use the shortest representation
//! that round-trips, so identical inputs give byte-identical files.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::inference::{AblationStage, DataToggles, Hypothesis, PosteriorEntry, SourcePosterior};
use crate::ingest::{ModelParams, WardSnapshot};

pub const REPORT_SCHEMA: &str = "wardsource-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Digest of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    /// `cases`, `locations`, `weights`, `fasta` or `config`.
    pub role: String,
    /// File name without directories.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub params: ModelParams,
    pub prior: String,
    pub toggles: DataToggles,
    pub inputs: Vec<InputDigest>,
    /// Sequenced cases whose sampling date was taken from their onset date.
    pub sample_date_from_onset: Vec<String>,
}

impl Provenance {
    pub fn new(ward: &WardSnapshot, prior: String, toggles: DataToggles, inputs: Vec<InputDigest>) -> Self {
        let mut params = ward.params.clone();
        params.epidemic_end = Some(ward.date_of(ward.frame.end));
        Provenance {
            generator: format!("wardsource {}", env!("CARGO_PKG_VERSION")),
            params,
            prior,
            toggles,
            inputs,
            sample_date_from_onset: ward
                .cases
                .values()
                .filter(|c| c.has_sequence && c.sample_time.is_none())
                .map(|c| c.id.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    /// Candidate id, `Hospital` or `Community`.
    pub source: String,
    /// `candidate`, `hospital` or `community`.
    pub kind: String,
    pub prior: f64,
    pub log_likelihood: Option<f64>,
    pub probability: f64,
}

impl From<&PosteriorEntry> for HypothesisRow {
    fn from(e: &PosteriorEntry) -> Self {
        let kind = match e.hypothesis {
            Hypothesis::Candidate(_) => "candidate",
            Hypothesis::Hospital => "hospital",
            Hypothesis::Community => "community",
        };
        HypothesisRow {
            source: e.hypothesis.label().to_string(),
            kind: kind.to_string(),
            prior: e.prior,
            log_likelihood: (!e.log_likelihood.is_zero()).then_some(e.log_likelihood.0),
            probability: e.probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub focal: String,
    pub rows: Vec<HypothesisRow>,
    pub nosocomial: f64,
    /// Highest-probability source; ties go to the smallest candidate id.
    pub most_likely: String,
}

impl From<&SourcePosterior> for PosteriorRecord {
    fn from(p: &SourcePosterior) -> Self {
        PosteriorRecord {
            focal: p.focal.clone(),
            rows: p.entries.iter().map(HypothesisRow::from).collect(),
            nosocomial: p.nosocomial,
            most_likely: p.most_likely().hypothesis.label().to_string(),
        }
    }
}

/// A focal case for which no posterior could be formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalFailure {
    pub focal: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub schema: String,
    pub schema_version: u32,
    pub provenance: Provenance,
    pub records: Vec<PosteriorRecord>,
    pub failures: Vec<FocalFailure>,
}

impl PosteriorReport {
    pub fn new(provenance: Provenance, posteriors: &[SourcePosterior], failures: Vec<FocalFailure>) -> Self {
        PosteriorReport {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION,
            provenance,
            records: posteriors.iter().map(PosteriorRecord::from).collect(),
            failures,
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// `focal,source,kind,prior,log_likelihood,probability,nosocomial`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("focal,source,kind,prior,log_likelihood,probability,nosocomial\n");
        for rec in &self.records {
            for row in &rec.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    csv_field(&rec.focal),
                    csv_field(&row.source),
                    row.kind,
                    num(row.prior),
                    log_num(row.log_likelihood),
                    num(row.probability),
                    num(rec.nosocomial)
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    #[serde(flatten)]
    pub row: HypothesisRow,
    /// Change in probability from the previous stage; zero at the first stage.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub stage: String,
    pub toggles: DataToggles,
    pub rows: Vec<AblationRow>,
    pub nosocomial: f64,
    pub nosocomial_delta: f64,
    pub most_likely: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema: String,
    pub schema_version: u32,
    pub provenance: Provenance,
    pub focal: String,
    pub order: Vec<String>,
    pub stages: Vec<AblationRecord>,
}

impl AblationReport {
    pub fn new(provenance: Provenance, focal: &str, stages: &[AblationStage]) -> Self {
        let mut records: Vec<AblationRecord> = Vec::with_capacity(stages.len());
        for stage in stages {
            let post = PosteriorRecord::from(&stage.posterior);
            let previous = records.last();
            let rows = post
                .rows
                .into_iter()
                .enumerate()
                .map(|(i, row)| {
                    let delta = previous.map_or(0.0, |p| row.probability - p.rows[i].row.probability);
                    AblationRow { row, delta }
                })
                .collect();
            records.push(AblationRecord {
                stage: stage.stage.clone(),
                toggles: stage.posterior.toggles,
                rows,
                nosocomial: post.nosocomial,
                nosocomial_delta: previous.map_or(0.0, |p| post.nosocomial - p.nosocomial),
                most_likely: post.most_likely,
            });
        }
        AblationReport {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION,
            provenance,
            focal: focal.to_string(),
            order: stages.iter().skip(1).map(|s| s.stage.clone()).collect(),
            stages: records,
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// `stage,focal,source,kind,prior,log_likelihood,probability,delta,nosocomial`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,focal,source,kind,prior,log_likelihood,probability,delta,nosocomial\n");
        for stage in &self.stages {
            for r in &stage.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    stage.stage,
                    csv_field(&self.focal),
                    csv_field(&r.row.source),
                    r.row.kind,
                    num(r.row.prior),
                    log_num(r.row.log_likelihood),
                    num(r.row.probability),
                    num(r.delta),
                    num(stage.nosocomial)
                );
            }
        }
        out
    }
}

/// Focal-by-source probability matrix.
///
/// Columns are every case id followed by `Hospital`, `Community` and
/// `Nosocomial`; a focal case's own column and any case outside its candidate
/// list are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMatrix {
    pub schema: String,
    pub schema_version: u32,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl HeatmapMatrix {
    pub fn new(case_ids: &[String], posteriors: &[SourcePosterior]) -> Self {
        let mut columns: Vec<String> = case_ids.to_vec();
        columns.extend(["Hospital", "Community", "Nosocomial"].map(String::from));
        let values = posteriors
            .iter()
            .map(|p| {
                let mut row: Vec<Option<f64>> = case_ids
                    .iter()
                    .map(|id| p.probability(&Hypothesis::Candidate(id.clone())))
                    .collect();
                row.push(p.probability(&Hypothesis::Hospital));
                row.push(p.probability(&Hypothesis::Community));
                row.push(Some(p.nosocomial));
                row
            })
            .collect();
        HeatmapMatrix {
            schema: "wardsource-heatmap".into(),
            schema_version: REPORT_SCHEMA_VERSION,
            rows: posteriors.iter().map(|p| p.focal.clone()).collect(),
            columns,
            values,
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// Header `focal,<columns...>`; empty cells for `None`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("focal");
        for c in &self.columns {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (focal, row) in self.rows.iter().zip(&self.values) {
            out.push_str(&csv_field(focal));
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&num(*v));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise");
    s.push('\n');
    s
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn log_num(v: Option<f64>) -> String {
    v.map_or_else(|| "-inf".to_string(), num)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
