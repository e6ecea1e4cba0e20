//! Ward datasets: case and location tables, optional contact weights and
//! FASTA, plus the run configuration.
//!
//! File formats
//! ------------
//!
//! * cases CSV: `id,onset_date,admission_date,sample_date`; the last two may
//!   be empty or absent.
//! * locations CSV: `id,date,location_code`.
//! * weights CSV (optional): `id_a,id_b,date,weight`, the elicited probability
//!   that the two were co-located on a day without location data.
//! * config: flat `key = value` lines with dotted keys (a TOML subset), see
//!   [`ModelParams::from_config_str`].
//!
//! Dates are `YYYY-MM-DD`. Internally every date becomes a day count since
//! the configured epidemic start.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{ContactHistory, ContactStatus};
use crate::distributions::{Discretization, WaitingTimeModel};
use crate::epidemiology::{CaseRecord, EpidemicFrame, EpidemiologyError, TransmissionProfile};
use crate::genomics::{Alignment, ErrorTerm, GenomicsError, PathogenGeneticParams};
use crate::Day;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}, record {record}: {message}")]
    Csv {
        path: String,
        record: u64,
        message: String,
    },
    #[error("{context}: `{value}` is not a YYYY-MM-DD date")]
    DateParse { context: String, value: String },
    #[error("duplicate case id `{0}`")]
    DuplicateCase(String),
    #[error("{context} refers to unknown case `{id}`")]
    UnknownCase { context: &'static str, id: String },
    #[error("FASTA record `{0}` has no row in the cases table")]
    SequenceWithoutCase(String),
    #[error("case `{id}` has two different locations on {date}")]
    ConflictingLocation { id: String, date: NaiveDate },
    #[error("contact weight for `{a}`/`{b}` on {date} is {weight}, not a probability")]
    InvalidWeight {
        a: String,
        b: String,
        date: NaiveDate,
        weight: f64,
    },
    #[error("{context}: date {date} is outside the epidemic frame {start}..={end}")]
    OutsideFrame {
        context: String,
        date: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Genomics(#[from] GenomicsError),
    #[error(transparent)]
    Epidemiology(#[from] EpidemiologyError),
}

fn config_err(key: &str, message: impl Into<String>) -> IngestError {
    IngestError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

pub fn parse_date(value: &str, context: impl FnOnce() -> String) -> Result<NaiveDate, IngestError> {
    let bytes = value.as_bytes();
    let shaped = bytes.len() == 10
        && bytes[4] == b'-'
        && bytes[7] == b'-'
        && bytes
            .iter()
            .enumerate()
            .all(|(i, b)| i == 4 || i == 7 || b.is_ascii_digit());
    match shaped.then(|| NaiveDate::parse_from_str(value, "%Y-%m-%d")) {
        Some(Ok(date)) => Ok(date),
        _ => Err(IngestError::DateParse {
            context: context(),
            value: value.to_string(),
        }),
    }
}

pub fn format_date(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

/// Model constants and run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub epidemic_start: NaiveDate,
    /// Last modelled day; defaults to the latest date in the data.
    pub epidemic_end: Option<NaiveDate>,
    pub genetic: PathogenGeneticParams,
    pub waiting: WaitingTimeModel,
    pub profile: TransmissionProfile,
    /// Contact probability for days without any location information.
    pub default_contact_weight: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            epidemic_start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            epidemic_end: None,
            genetic: PathogenGeneticParams::default(),
            waiting: WaitingTimeModel::default(),
            profile: TransmissionProfile::default(),
            default_contact_weight: 0.5,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "epidemic.start",
    "epidemic.end",
    "genetic.ne",
    "genetic.gen_time",
    "genetic.mu",
    "genetic.error_constant",
    "genetic.error_per_base",
    "waiting.meanlog",
    "waiting.sdlog",
    "waiting.discretization",
    "profile.start_offset",
    "profile.masses",
    "contact.default_weight",
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64, IngestError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(config_err(key, "expected a number")),
    }
}

fn as_date(key: &str, v: &toml::Value) -> Result<NaiveDate, IngestError> {
    let text = match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Datetime(d) => d.to_string(),
        _ => return Err(config_err(key, "expected a YYYY-MM-DD date")),
    };
    parse_date(&text, || format!("config key `{key}`"))
}

impl ModelParams {
    /// Parses the flat configuration format. Every key is optional and falls
    /// back to the defaults:
    ///
    /// ```text
    /// epidemic.start = 2020-01-01
    /// genetic.ne = 51
    /// genetic.gen_time = 5.5
    /// genetic.mu = 1.829e-6
    /// genetic.error_constant = 0.404   # or genetic.error_per_base = 1e-5
    /// waiting.meanlog = 1.434
    /// waiting.sdlog = 0.6612
    /// waiting.discretization = "day-bin"   # or "density"
    /// profile.start_offset = -3
    /// profile.masses = [0.05, 0.1, ...]
    /// contact.default_weight = 0.5
    /// ```
    pub fn from_config_str(text: &str) -> Result<Self, IngestError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_err("<file>", e.message().to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        if let Some(unknown) = flat.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(config_err(unknown, "unknown key"));
        }

        let mut params = ModelParams::default();
        let num = |key: &str| flat.get(key).map(|v| as_f64(key, v)).transpose();

        if let Some(v) = flat.get("epidemic.start") {
            params.epidemic_start = as_date("epidemic.start", v)?;
        }
        if let Some(v) = flat.get("epidemic.end") {
            params.epidemic_end = Some(as_date("epidemic.end", v)?);
        }
        if let Some(x) = num("genetic.ne")? {
            params.genetic.ne = x;
        }
        if let Some(x) = num("genetic.gen_time")? {
            params.genetic.gen_time = x;
        }
        if let Some(x) = num("genetic.mu")? {
            params.genetic.mu = x;
        }
        match (num("genetic.error_constant")?, num("genetic.error_per_base")?) {
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "genetic.error_per_base",
                    "set either genetic.error_constant or genetic.error_per_base, not both",
                ))
            }
            (Some(c), None) => params.genetic.error = ErrorTerm::Constant(c),
            (None, Some(e)) => params.genetic.error = ErrorTerm::PerBase(e),
            (None, None) => {}
        }
        params
            .genetic
            .validate()
            .map_err(|e| config_err("genetic", e.to_string()))?;

        if let Some(x) = num("waiting.meanlog")? {
            params.waiting.meanlog = x;
        }
        if let Some(x) = num("waiting.sdlog")? {
            params.waiting.sdlog = x;
        }
        if let Some(v) = flat.get("waiting.discretization") {
            let s = v
                .as_str()
                .ok_or_else(|| config_err("waiting.discretization", "expected a string"))?;
            params.waiting.discretization = s
                .parse::<Discretization>()
                .map_err(|e| config_err("waiting.discretization", e))?;
        }
        params
            .waiting
            .validate()
            .map_err(|e| config_err("waiting", e.to_string()))?;

        match (flat.get("profile.start_offset"), flat.get("profile.masses")) {
            (None, None) => {}
            (Some(start), Some(masses)) => {
                let start = start
                    .as_integer()
                    .ok_or_else(|| config_err("profile.start_offset", "expected an integer"))?;
                let masses = masses
                    .as_array()
                    .ok_or_else(|| config_err("profile.masses", "expected an array of numbers"))?
                    .iter()
                    .map(|v| as_f64("profile.masses", v))
                    .collect::<Result<Vec<_>, _>>()?;
                params.profile = TransmissionProfile::new(start, masses)
                    .map_err(|e| config_err("profile.masses", e.to_string()))?;
            }
            _ => {
                return Err(config_err(
                    "profile",
                    "profile.start_offset and profile.masses must be given together",
                ))
            }
        }

        if let Some(w) = num("contact.default_weight")? {
            if !(0.0..=1.0).contains(&w) {
                return Err(config_err("contact.default_weight", "must be in [0, 1]"));
            }
            params.default_contact_weight = w;
        }
        if let Some(end) = params.epidemic_end {
            if end < params.epidemic_start {
                return Err(config_err("epidemic.end", "precedes epidemic.start"));
            }
        }
        Ok(params)
    }

    /// Applies the keys set in `overrides` (same format as the configuration
    /// file) on top of these settings.
    pub fn with_overrides(&self, overrides: &str) -> Result<Self, IngestError> {
        let table: toml::Table = overrides
            .parse()
            .map_err(|e: toml::de::Error| config_err("<overrides>", e.message().to_string()))?;
        let mut changes = BTreeMap::new();
        flatten("", &table, &mut changes);
        let base: toml::Table = self.to_config_string().parse().expect("own output parses");
        let mut flat = BTreeMap::new();
        flatten("", &base, &mut flat);
        for (key, value) in changes {
            match key.as_str() {
                "genetic.error_constant" => flat.remove("genetic.error_per_base"),
                "genetic.error_per_base" => flat.remove("genetic.error_constant"),
                _ => None,
            };
            flat.insert(key, value);
        }
        let mut text = String::new();
        for (key, value) in &flat {
            let _ = writeln!(text, "{key} = {value}");
        }
        ModelParams::from_config_str(&text)
    }

    /// Writes every setting in the flat configuration format.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "epidemic.start = {}", format_date(self.epidemic_start));
        if let Some(end) = self.epidemic_end {
            let _ = writeln!(out, "epidemic.end = {}", format_date(end));
        }
        let _ = writeln!(out, "genetic.ne = {:?}", self.genetic.ne);
        let _ = writeln!(out, "genetic.gen_time = {:?}", self.genetic.gen_time);
        let _ = writeln!(out, "genetic.mu = {:?}", self.genetic.mu);
        match self.genetic.error {
            ErrorTerm::Constant(c) => {
                let _ = writeln!(out, "genetic.error_constant = {c:?}");
            }
            ErrorTerm::PerBase(e) => {
                let _ = writeln!(out, "genetic.error_per_base = {e:?}");
            }
        }
        let _ = writeln!(out, "waiting.meanlog = {:?}", self.waiting.meanlog);
        let _ = writeln!(out, "waiting.sdlog = {:?}", self.waiting.sdlog);
        let _ = writeln!(
            out,
            "waiting.discretization = \"{}\"",
            self.waiting.discretization.as_str()
        );
        let _ = writeln!(out, "profile.start_offset = {}", self.profile.start_offset());
        let masses: Vec<String> = self.profile.masses().iter().map(|m| format!("{m:?}")).collect();
        let _ = writeln!(out, "profile.masses = [{}]", masses.join(", "));
        let _ = writeln!(out, "contact.default_weight = {:?}", self.default_contact_weight);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRow {
    pub id: String,
    pub onset_date: NaiveDate,
    #[serde(default)]
    pub admission_date: Option<NaiveDate>,
    #[serde(default)]
    pub sample_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationRow {
    pub id: String,
    pub date: NaiveDate,
    pub location_code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub id_a: String,
    pub id_b: String,
    pub date: NaiveDate,
    pub weight: f64,
}

/// Everything needed to build a snapshot, still in calendar dates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WardInput {
    pub cases: Vec<CaseRow>,
    pub locations: Vec<LocationRow>,
    pub weights: Vec<WeightRow>,
    pub alignment: Option<Alignment>,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "case", rename_all = "kebab-case")]
pub enum Warning {
    NoSequence(String),
    NoLocations(String),
    /// The case has a sequence but no sample date; its onset date is used.
    SampleDateFromOnset(String),
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::NoSequence(id) => write!(f, "case `{id}` has no sequence"),
            Warning::NoLocations(id) => write!(f, "case `{id}` has no location records"),
            Warning::SampleDateFromOnset(id) => {
                write!(f, "case `{id}` has no sample date; onset date used for sampling")
            }
        }
    }
}

/// Immutable, validated view of a ward on the internal day axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WardSnapshot {
    pub params: ModelParams,
    pub frame: EpidemicFrame,
    pub cases: BTreeMap<String, CaseRecord>,
    pub alignment: Option<Alignment>,
    /// case id -> day -> location code
    pub locations: BTreeMap<String, BTreeMap<Day, String>>,
    /// ordered (id, id) pair -> day -> elicited contact weight
    pub contact_weights: BTreeMap<(String, String), BTreeMap<Day, f64>>,
}

fn ordered_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl WardSnapshot {
    pub fn build(input: WardInput) -> Result<(WardSnapshot, Vec<Warning>), IngestError> {
        let WardInput {
            cases: case_rows,
            locations: location_rows,
            weights: weight_rows,
            alignment,
            params,
        } = input;
        let start = params.epidemic_start;

        let all_dates = case_rows
            .iter()
            .flat_map(|c| [Some(c.onset_date), c.admission_date, c.sample_date])
            .flatten()
            .chain(location_rows.iter().map(|l| l.date))
            .chain(weight_rows.iter().map(|w| w.date));
        let end = match params.epidemic_end {
            Some(end) => end,
            None => all_dates.max().unwrap_or(start).max(start),
        };
        let day = |date: NaiveDate, context: &dyn Fn() -> String| -> Result<Day, IngestError> {
            if date < start || date > end {
                return Err(IngestError::OutsideFrame {
                    context: context(),
                    date,
                    start,
                    end,
                });
            }
            Ok((date - start).num_days())
        };
        let frame = EpidemicFrame::new(0, (end - start).num_days())?;

        let mut cases = BTreeMap::new();
        for row in &case_rows {
            let ctx = || format!("case `{}`", row.id);
            let record = CaseRecord {
                id: row.id.clone(),
                onset: day(row.onset_date, &ctx)?,
                admission: row.admission_date.map(|d| day(d, &ctx)).transpose()?,
                sample_time: row.sample_date.map(|d| day(d, &ctx)).transpose()?,
                has_sequence: alignment.as_ref().is_some_and(|a| a.contains(&row.id)),
            };
            record.validate(&frame)?;
            if cases.insert(row.id.clone(), record).is_some() {
                return Err(IngestError::DuplicateCase(row.id.clone()));
            }
        }

        if let Some(aln) = &alignment {
            if let Some(orphan) = aln.ids().find(|id| !cases.contains_key(*id)) {
                return Err(IngestError::SequenceWithoutCase(orphan.to_string()));
            }
        }

        let mut locations: BTreeMap<String, BTreeMap<Day, String>> = BTreeMap::new();
        for row in &location_rows {
            if !cases.contains_key(&row.id) {
                return Err(IngestError::UnknownCase {
                    context: "location row",
                    id: row.id.clone(),
                });
            }
            let d = day(row.date, &|| format!("location of `{}`", row.id))?;
            let per_case = locations.entry(row.id.clone()).or_default();
            match per_case.get(&d) {
                Some(existing) if existing != &row.location_code => {
                    return Err(IngestError::ConflictingLocation {
                        id: row.id.clone(),
                        date: row.date,
                    })
                }
                _ => {
                    per_case.insert(d, row.location_code.clone());
                }
            }
        }

        let mut contact_weights: BTreeMap<(String, String), BTreeMap<Day, f64>> = BTreeMap::new();
        for row in &weight_rows {
            for id in [&row.id_a, &row.id_b] {
                if !cases.contains_key(id) {
                    return Err(IngestError::UnknownCase {
                        context: "contact weight",
                        id: id.clone(),
                    });
                }
            }
            if !(0.0..=1.0).contains(&row.weight) {
                return Err(IngestError::InvalidWeight {
                    a: row.id_a.clone(),
                    b: row.id_b.clone(),
                    date: row.date,
                    weight: row.weight,
                });
            }
            let d = day(row.date, &|| format!("contact weight `{}`/`{}`", row.id_a, row.id_b))?;
            contact_weights
                .entry(ordered_pair(&row.id_a, &row.id_b))
                .or_default()
                .insert(d, row.weight);
        }

        let mut warnings = Vec::new();
        for (id, case) in &cases {
            if !case.has_sequence {
                warnings.push(Warning::NoSequence(id.clone()));
            } else if case.sample_time.is_none() {
                warnings.push(Warning::SampleDateFromOnset(id.clone()));
            }
            if !locations.contains_key(id) {
                warnings.push(Warning::NoLocations(id.clone()));
            }
        }

        Ok((
            WardSnapshot {
                params,
                frame,
                cases,
                alignment: alignment.filter(|a| !a.is_empty()),
                locations,
                contact_weights,
            },
            warnings,
        ))
    }

    pub fn case(&self, id: &str) -> Option<&CaseRecord> {
        self.cases.get(id)
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.cases.keys().map(String::as_str)
    }

    pub fn date_of(&self, day: Day) -> NaiveDate {
        self.params.epidemic_start + chrono::Duration::days(day)
    }

    /// Converts back to dated rows.
    pub fn to_input(&self) -> WardInput {
        let cases = self
            .cases
            .values()
            .map(|c| CaseRow {
                id: c.id.clone(),
                onset_date: self.date_of(c.onset),
                admission_date: c.admission.map(|d| self.date_of(d)),
                sample_date: c.sample_time.map(|d| self.date_of(d)),
            })
            .collect();
        let locations = self
            .locations
            .iter()
            .flat_map(|(id, days)| {
                days.iter().map(move |(d, code)| LocationRow {
                    id: id.clone(),
                    date: self.date_of(*d),
                    location_code: code.clone(),
                })
            })
            .collect();
        let weights = self
            .contact_weights
            .iter()
            .flat_map(|((a, b), days)| {
                days.iter().map(move |(d, w)| WeightRow {
                    id_a: a.clone(),
                    id_b: b.clone(),
                    date: self.date_of(*d),
                    weight: *w,
                })
            })
            .collect();
        let mut params = self.params.clone();
        params.epidemic_end = Some(self.date_of(self.frame.end));
        WardInput {
            cases,
            locations,
            weights,
            alignment: self.alignment.clone(),
            params,
        }
    }
}

/// Co-location history of two cases over every day on which either has a
/// location record or the pair has an elicited weight.
///
/// A day is `Together` when both are recorded at the same location code,
/// `Apart` when both are recorded at different codes, and otherwise
/// `Unknown` with the elicited weight (or the configured default).
pub fn build_contact_history(snapshot: &WardSnapshot, az: &str, focal: &str) -> ContactHistory {
    let empty = BTreeMap::new();
    let la = snapshot.locations.get(az).unwrap_or(&empty);
    let lb = snapshot.locations.get(focal).unwrap_or(&empty);
    let weights = snapshot.contact_weights.get(&ordered_pair(az, focal));
    let mut days: BTreeSet<Day> = la.keys().chain(lb.keys()).copied().collect();
    if let Some(w) = weights {
        days.extend(w.keys().copied());
    }
    let default_weight = snapshot.params.default_contact_weight;
    let history = days
        .into_iter()
        .map(|d| {
            let status = match (la.get(&d), lb.get(&d)) {
                (Some(x), Some(y)) if x == y => ContactStatus::Together,
                (Some(_), Some(_)) => ContactStatus::Apart,
                _ => ContactStatus::Unknown(
                    weights.and_then(|w| w.get(&d)).copied().unwrap_or(default_weight),
                ),
            };
            (d, status)
        })
        .collect();
    ContactHistory::new(history).expect("days are unique and weights validated")
}

/// Locations of the files making up a ward on disk.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WardPaths {
    pub cases: PathBuf,
    pub locations: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub fasta: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedWard {
    pub snapshot: WardSnapshot,
    pub warnings: Vec<Warning>,
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

#[derive(Deserialize)]
struct RawCase {
    id: String,
    onset_date: String,
    #[serde(default)]
    admission_date: Option<String>,
    #[serde(default)]
    sample_date: Option<String>,
}

#[derive(Deserialize)]
struct RawLocation {
    id: String,
    date: String,
    location_code: String,
}

#[derive(Deserialize)]
struct RawWeight {
    id_a: String,
    id_b: String,
    date: String,
    weight: f64,
}

fn parse_rows<T: for<'de> Deserialize<'de>>(path: &str, text: &str) -> Result<Vec<T>, IngestError> {
    let mut rows = Vec::new();
    for (i, rec) in csv_reader(text).deserialize::<T>().enumerate() {
        let row = rec.map_err(|e| IngestError::Csv {
            path: path.to_string(),
            record: e.position().map_or(i as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn optional_date(value: Option<String>, context: impl FnOnce() -> String) -> Result<Option<NaiveDate>, IngestError> {
    match value {
        Some(v) if !v.is_empty() => parse_date(&v, context).map(Some),
        _ => Ok(None),
    }
}

pub fn parse_cases_csv(path: &str, text: &str) -> Result<Vec<CaseRow>, IngestError> {
    parse_rows::<RawCase>(path, text)?
        .into_iter()
        .map(|r| {
            let ctx = |field: &str| format!("{path}: case `{}` {field}", r.id);
            Ok(CaseRow {
                onset_date: parse_date(&r.onset_date, || ctx("onset_date"))?,
                admission_date: optional_date(r.admission_date.clone(), || ctx("admission_date"))?,
                sample_date: optional_date(r.sample_date.clone(), || ctx("sample_date"))?,
                id: r.id,
            })
        })
        .collect()
}

pub fn parse_locations_csv(path: &str, text: &str) -> Result<Vec<LocationRow>, IngestError> {
    parse_rows::<RawLocation>(path, text)?
        .into_iter()
        .map(|r| {
            Ok(LocationRow {
                date: parse_date(&r.date, || format!("{path}: location of `{}`", r.id))?,
                id: r.id,
                location_code: r.location_code,
            })
        })
        .collect()
}

pub fn parse_weights_csv(path: &str, text: &str) -> Result<Vec<WeightRow>, IngestError> {
    parse_rows::<RawWeight>(path, text)?
        .into_iter()
        .map(|r| {
            Ok(WeightRow {
                date: parse_date(&r.date, || format!("{path}: weight `{}`/`{}`", r.id_a, r.id_b))?,
                id_a: r.id_a,
                id_b: r.id_b,
                weight: r.weight,
            })
        })
        .collect()
}

/// Reads, validates and converts a ward from disk.
pub fn load_ward(paths: &WardPaths) -> Result<LoadedWard, IngestError> {
    let display = |p: &Path| p.display().to_string();
    let params = match &paths.config {
        Some(p) => ModelParams::from_config_str(&read_text(p)?)?,
        None => ModelParams::default(),
    };
    let cases = parse_cases_csv(&display(&paths.cases), &read_text(&paths.cases)?)?;
    let locations = match &paths.locations {
        Some(p) => parse_locations_csv(&display(p), &read_text(p)?)?,
        None => Vec::new(),
    };
    let weights = match &paths.weights {
        Some(p) => parse_weights_csv(&display(p), &read_text(p)?)?,
        None => Vec::new(),
    };
    let alignment = match &paths.fasta {
        Some(p) => Some(Alignment::from_fasta_str(&read_text(p)?)?),
        None => None,
    };
    let (snapshot, warnings) = WardSnapshot::build(WardInput {
        cases,
        locations,
        weights,
        alignment,
        params,
    })?;
    Ok(LoadedWard { snapshot, warnings })
}

fn write_file(path: &Path, contents: &str) -> Result<(), IngestError> {
    fs::write(path, contents).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn cases_to_csv(rows: &[CaseRow]) -> String {
    let mut out = String::from("id,onset_date,admission_date,sample_date\n");
    let opt = |d: Option<NaiveDate>| d.map(format_date).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.id,
            format_date(r.onset_date),
            opt(r.admission_date),
            opt(r.sample_date)
        );
    }
    out
}

pub fn locations_to_csv(rows: &[LocationRow]) -> String {
    let mut out = String::from("id,date,location_code\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.id, format_date(r.date), r.location_code);
    }
    out
}

pub fn weights_to_csv(rows: &[WeightRow]) -> String {
    let mut out = String::from("id_a,id_b,date,weight\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:?}", r.id_a, r.id_b, format_date(r.date), r.weight);
    }
    out
}

/// Writes a snapshot back to the on-disk formats under `dir`.
pub fn write_ward(snapshot: &WardSnapshot, dir: &Path) -> Result<WardPaths, IngestError> {
    fs::create_dir_all(dir).map_err(|e| IngestError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let input = snapshot.to_input();
    let paths = WardPaths {
        cases: dir.join("cases.csv"),
        locations: Some(dir.join("locations.csv")),
        weights: Some(dir.join("weights.csv")),
        fasta: input.alignment.as_ref().map(|_| dir.join("alignment.fasta")),
        config: Some(dir.join("config.toml")),
    };
    write_file(&paths.cases, &cases_to_csv(&input.cases))?;
    write_file(paths.locations.as_deref().expect("set"), &locations_to_csv(&input.locations))?;
    write_file(paths.weights.as_deref().expect("set"), &weights_to_csv(&input.weights))?;
    if let (Some(path), Some(aln)) = (&paths.fasta, &input.alignment) {
        write_file(path, &aln.to_fasta())?;
    }
    write_file(paths.config.as_deref().expect("set"), &input.params.to_config_string())?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        parse_date(s, String::new).unwrap()
    }

    #[test]
    fn strict_dates() {
        assert!(parse_date("2020-01-01", String::new).is_ok());
        for bad in ["2020-1-01", "2020/01/01", "20200101", "2020-02-30", " 2020-01-01"] {
            assert!(parse_date(bad, String::new).is_err(), "{bad}");
        }
    }

    #[test]
    fn cuh_style_config_echoes() {
        let text = "epidemic.start = 2020-01-01\n\
                    genetic.ne = 51\n\
                    genetic.gen_time = 5.5\n\
                    genetic.mu = 1.829e-6\n\
                    genetic.error_constant = 0.404\n";
        let p = ModelParams::from_config_str(text).unwrap();
        assert_eq!(p.epidemic_start, date("2020-01-01"));
        assert_eq!(p.genetic.ne, 51.0);
        assert_eq!(p.genetic.gen_time, 5.5);
        assert_eq!(p.genetic.mu, 1.829e-6);
        assert_eq!(p.genetic.error, ErrorTerm::Constant(0.404));
    }

    #[test]
    fn config_round_trip_and_errors() {
        let mut p = ModelParams::default();
        p.genetic.error = ErrorTerm::PerBase(2.5e-5);
        p.waiting.discretization = Discretization::Density;
        p.epidemic_end = Some(date("2020-06-30"));
        p.profile = TransmissionProfile::new(-1, vec![0.25, 0.5, 0.25]).unwrap();
        let again = ModelParams::from_config_str(&p.to_config_string()).unwrap();
        assert_eq!(again, p);
        assert_eq!(
            ModelParams::from_config_str(&ModelParams::default().to_config_string()).unwrap(),
            ModelParams::default()
        );

        let err = ModelParams::from_config_str("genetic.nee = 3\n").unwrap_err();
        assert!(matches!(err, IngestError::Config { ref key, .. } if key == "genetic.nee"));
        assert!(ModelParams::from_config_str("genetic.ne = -1\n").is_err());
        assert!(ModelParams::from_config_str("genetic.error_constant = 0.4\ngenetic.error_per_base = 1e-5\n").is_err());
        assert!(ModelParams::from_config_str("profile.start_offset = 0\n").is_err());
        assert!(ModelParams::from_config_str("waiting.discretization = \"hourly\"\n").is_err());
        assert!(ModelParams::from_config_str("[genetic]\nne = 40\n").is_ok());
    }

    fn input() -> WardInput {
        WardInput {
            cases: vec![
                CaseRow {
                    id: "a".into(),
                    onset_date: date("2020-01-05"),
                    admission_date: None,
                    sample_date: None,
                },
                CaseRow {
                    id: "b".into(),
                    onset_date: date("2020-01-09"),
                    admission_date: Some(date("2020-01-02")),
                    sample_date: Some(date("2020-01-10")),
                },
            ],
            locations: vec![
                LocationRow {
                    id: "a".into(),
                    date: date("2020-01-03"),
                    location_code: "W1".into(),
                },
                LocationRow {
                    id: "b".into(),
                    date: date("2020-01-03"),
                    location_code: "W1".into(),
                },
                LocationRow {
                    id: "a".into(),
                    date: date("2020-01-04"),
                    location_code: "W1".into(),
                },
                LocationRow {
                    id: "b".into(),
                    date: date("2020-01-04"),
                    location_code: "W2".into(),
                },
                LocationRow {
                    id: "b".into(),
                    date: date("2020-01-05"),
                    location_code: "W2".into(),
                },
            ],
            weights: vec![WeightRow {
                id_a: "b".into(),
                id_b: "a".into(),
                date: date("2020-01-06"),
                weight: 0.8,
            }],
            alignment: None,
            params: ModelParams::default(),
        }
    }

    #[test]
    fn snapshot_days_and_frame() {
        let (s, warnings) = WardSnapshot::build(input()).unwrap();
        assert_eq!(s.frame, EpidemicFrame { start: 0, end: 9 });
        assert_eq!(s.cases["b"].admission, Some(1));
        assert_eq!(s.cases["b"].onset, 8);
        assert!(warnings.contains(&Warning::NoSequence("a".into())));
    }

    #[test]
    fn contact_history_rules() {
        let (s, _) = WardSnapshot::build(input()).unwrap();
        let h = build_contact_history(&s, "a", "b");
        assert_eq!(
            h.days(),
            &[
                (2, ContactStatus::Together),
                (3, ContactStatus::Apart),
                (4, ContactStatus::Unknown(0.5)),
                (5, ContactStatus::Unknown(0.8)),
            ]
        );
        assert_eq!(h, build_contact_history(&s, "b", "a"));
    }

    #[test]
    fn overrides_merge() {
        let base = ModelParams::default();
        let p = base.with_overrides("genetic.ne = 80\ngenetic.error_per_base = 1e-5").unwrap();
        assert_eq!(p.genetic.ne, 80.0);
        assert_eq!(p.genetic.error, ErrorTerm::PerBase(1e-5));
        assert_eq!(p.waiting, base.waiting);
        let back = p.with_overrides("genetic.error_constant = 0.404").unwrap();
        assert_eq!(back.genetic.error, ErrorTerm::Constant(0.404));
        assert!(matches!(
            base.with_overrides("genetic.nope = 1"),
            Err(IngestError::Config { key, .. }) if key == "genetic.nope"
        ));
        let dated = base.with_overrides("epidemic.start = \"2020-02-01\"").unwrap();
        assert_eq!(format_date(dated.epidemic_start), "2020-02-01");
    }

    #[test]
    fn validation_errors() {
        let mut dup = input();
        dup.cases.push(dup.cases[0].clone());
        assert_eq!(WardSnapshot::build(dup).unwrap_err(), IngestError::DuplicateCase("a".into()));

        let mut orphan = input();
        orphan.alignment = Some(Alignment::from_fasta_str(">zz\nACGT\n").unwrap());
        assert_eq!(
            WardSnapshot::build(orphan).unwrap_err(),
            IngestError::SequenceWithoutCase("zz".into())
        );

        let mut loc = input();
        loc.locations[0].id = "q".into();
        assert!(matches!(WardSnapshot::build(loc), Err(IngestError::UnknownCase { .. })));

        let mut conflict = input();
        conflict.locations[1].id = "a".into();
        conflict.locations[1].location_code = "W2".into();
        assert!(matches!(
            WardSnapshot::build(conflict),
            Err(IngestError::ConflictingLocation { .. })
        ));

        let mut early = input();
        early.cases[0].onset_date = date("2019-12-31");
        assert!(matches!(WardSnapshot::build(early), Err(IngestError::OutsideFrame { .. })));

        let mut inverted = input();
        inverted.cases[1].admission_date = Some(date("2020-01-20"));
        assert!(WardSnapshot::build(inverted).is_err());

        let mut weight = input();
        weight.weights[0].weight = 1.2;
        assert!(matches!(WardSnapshot::build(weight), Err(IngestError::InvalidWeight { .. })));
    }

    #[test]
    fn csv_parsing() {
        let rows = parse_cases_csv("c.csv", "id,onset_date,admission_date,sample_date\nx,2020-02-01,,2020-02-02\n").unwrap();
        assert_eq!(rows[0].admission_date, None);
        assert_eq!(rows[0].sample_date, Some(date("2020-02-02")));
        let rows = parse_cases_csv("c.csv", "id,onset_date\nx,2020-02-01\n").unwrap();
        assert_eq!(rows.len(), 1);
        let err = parse_cases_csv("c.csv", "id,onset_date\nx,01/02/2020\n").unwrap_err();
        assert!(matches!(err, IngestError::DateParse { .. }));
        let err = parse_locations_csv("l.csv", "id,date\nx,2020-02-01\n").unwrap_err();
        assert!(matches!(err, IngestError::Csv { .. }));
    }
}
