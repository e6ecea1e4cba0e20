//! Ward sessions: mutable state behind a single writer, published as
//! immutable snapshots, with an append-only JSONL event log per ward.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use wardsource_core::genomics::Alignment;
use wardsource_core::ingest::{CaseRow, LocationRow, WeightRow};
use wardsource_core::{ModelParams, WardInput, WardSnapshot};

use crate::error::ApiError;

/// One recorded mutation. Replaying a ward's events in order rebuilds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created { config: String },
    CaseUpserted { case: CaseRow },
    LocationsUpserted { rows: Vec<LocationRow> },
    WeightsUpserted { rows: Vec<WeightRow> },
    SequencesUploaded { fasta: String },
    ParamsSet { config: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogLine {
    revision: u64,
    #[serde(flatten)]
    event: Event,
}

/// Editable ward contents.
#[derive(Debug, Clone, Default)]
pub struct WardState {
    pub cases: BTreeMap<String, CaseRow>,
    pub locations: BTreeMap<(String, NaiveDate), String>,
    pub weights: BTreeMap<(String, String, NaiveDate), f64>,
    pub alignment: Option<Alignment>,
    pub params: ModelParams,
}

impl WardState {
    fn apply(&mut self, event: &Event) -> Result<(), ApiError> {
        match event {
            Event::Created { config } | Event::ParamsSet { config } => {
                self.params = ModelParams::from_config_str(config)?;
            }
            Event::CaseUpserted { case } => {
                self.cases.insert(case.id.clone(), case.clone());
            }
            Event::LocationsUpserted { rows } => {
                for r in rows {
                    self.locations.insert((r.id.clone(), r.date), r.location_code.clone());
                }
            }
            Event::WeightsUpserted { rows } => {
                for r in rows {
                    let (a, b) = if r.id_a <= r.id_b { (&r.id_a, &r.id_b) } else { (&r.id_b, &r.id_a) };
                    self.weights.insert((a.clone(), b.clone(), r.date), r.weight);
                }
            }
            Event::SequencesUploaded { fasta } => {
                let upload = Alignment::from_fasta_str(fasta)?;
                match &mut self.alignment {
                    Some(existing) => existing.merge(upload)?,
                    None => self.alignment = Some(upload),
                }
            }
        }
        Ok(())
    }

    fn to_input(&self) -> WardInput {
        WardInput {
            cases: self.cases.values().cloned().collect(),
            locations: self
                .locations
                .iter()
                .map(|((id, date), code)| LocationRow {
                    id: id.clone(),
                    date: *date,
                    location_code: code.clone(),
                })
                .collect(),
            weights: self
                .weights
                .iter()
                .map(|((a, b, date), w)| WeightRow {
                    id_a: a.clone(),
                    id_b: b.clone(),
                    date: *date,
                    weight: *w,
                })
                .collect(),
            alignment: self.alignment.clone(),
            params: self.params.clone(),
        }
    }

    fn snapshot(&self) -> Result<WardSnapshot, ApiError> {
        Ok(WardSnapshot::build(self.to_input())?.0)
    }
}

/// What readers see: a consistent revision of the ward.
#[derive(Debug)]
pub struct Published {
    pub revision: u64,
    pub state: WardState,
    pub snapshot: WardSnapshot,
}

pub struct WardSession {
    pub id: String,
    writer: Mutex<(u64, WardState)>,
    published: RwLock<Arc<Published>>,
    log: Option<PathBuf>,
}

impl WardSession {
    pub fn current(&self) -> Arc<Published> {
        self.published.read().expect("lock poisoned").clone()
    }

    /// Validates and applies `event`, appends it to the log and publishes the
    /// new revision. Fails with a conflict if `expected` is stale.
    pub async fn mutate(&self, event: Event, expected: Option<u64>) -> Result<u64, ApiError> {
        let mut guard = self.writer.lock().await;
        let (revision, state) = &mut *guard;
        if let Some(expected) = expected {
            if expected != *revision {
                return Err(ApiError::conflict(expected, *revision));
            }
        }
        let mut next = state.clone();
        next.apply(&event)?;
        let snapshot = next.snapshot()?;
        let new_revision = *revision + 1;
        if let Some(path) = &self.log {
            append(path, new_revision, &event)?;
        }
        *revision = new_revision;
        *state = next.clone();
        *self.published.write().expect("lock poisoned") = Arc::new(Published {
            revision: new_revision,
            state: next,
            snapshot,
        });
        Ok(new_revision)
    }
}

fn append(path: &Path, revision: u64, event: &Event) -> Result<(), ApiError> {
    let line = serde_json::to_string(&LogLine {
        revision,
        event: event.clone(),
    })
    .map_err(|e| ApiError::internal(e.to_string()))?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    writeln!(file, "{line}")
        .and_then(|_| file.sync_data())
        .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
}

/// All ward sessions, optionally persisted under `data_dir/wards/`.
pub struct Store {
    wards: RwLock<HashMap<String, Arc<WardSession>>>,
    dir: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            wards: RwLock::new(HashMap::new()),
            dir: None,
        }
    }

    /// Opens `data_dir`, replaying every ward's event log.
    pub fn open(data_dir: &Path) -> anyhow::Result<Self> {
        let dir = data_dir.join("wards");
        fs::create_dir_all(&dir)?;
        let mut wards = HashMap::new();
        let mut entries: Vec<_> = fs::read_dir(&dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let session = replay(&id, &path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            tracing::info!(ward = %id, revision = session.current().revision, "replayed ward");
            wards.insert(id, Arc::new(session));
        }
        Ok(Store {
            wards: RwLock::new(wards),
            dir: Some(dir),
        })
    }

    pub fn get(&self, id: &str) -> Result<Arc<WardSession>, ApiError> {
        self.wards
            .read()
            .expect("lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("ward", id))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.wards.read().expect("lock poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create(&self, id: String, params: ModelParams) -> Result<Arc<WardSession>, ApiError> {
        let event = Event::Created {
            config: params.to_config_string(),
        };
        let mut state = WardState::default();
        state.apply(&event)?;
        let snapshot = state.snapshot()?;
        let log = self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")));
        if let Some(path) = &log {
            append(path, 0, &event)?;
        }
        let session = Arc::new(WardSession {
            id: id.clone(),
            writer: Mutex::new((0, state.clone())),
            published: RwLock::new(Arc::new(Published {
                revision: 0,
                state,
                snapshot,
            })),
            log,
        });
        self.wards.write().expect("lock poisoned").insert(id, session.clone());
        Ok(session)
    }
}

fn replay(id: &str, path: &Path) -> Result<WardSession, String> {
    let file = fs::File::open(path).map_err(|e| e.to_string())?;
    let mut state = WardState::default();
    let mut revision = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogLine = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1))?;
        state
            .apply(&entry.event)
            .map_err(|e| format!("line {}: {}", n + 1, e.body.message))?;
        revision = entry.revision;
    }
    let snapshot = state.snapshot().map_err(|e| e.body.message)?;
    Ok(WardSession {
        id: id.to_string(),
        writer: Mutex::new((revision, state.clone())),
        published: RwLock::new(Arc::new(Published {
            revision,
            state,
            snapshot,
        })),
        log: Some(path.to_path_buf()),
    })
}
