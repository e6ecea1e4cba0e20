//! `/v1/` request handlers and JSON schemas.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::multipart::Multipart;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use wardsource_core::ingest::{format_date, parse_date, CaseRow, LocationRow, WeightRow};
use wardsource_core::report::{AblationRecord, AblationReport, FocalFailure, HeatmapMatrix, PosteriorRecord, Provenance};
use wardsource_core::{DataSource, DataToggles, Engine, ModelParams, SourcePrior};

use crate::error::ApiError;
use crate::store::{Event, Published, WardSession};
use crate::AppState;

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

/// Renders `{key: json}` pairs as configuration lines.
fn config_overrides(values: &BTreeMap<String, Value>) -> Result<String, ApiError> {
    let mut text = String::new();
    for (key, value) in values {
        let literal = match value {
            Value::Number(_) | Value::String(_) | Value::Bool(_) => value.to_string(),
            Value::Array(items) if items.iter().all(Value::is_number) => value.to_string(),
            _ => return Err(ApiError::invalid(format!("config.{key}"), "expected a number, string or array of numbers")),
        };
        text.push_str(&format!("{key} = {literal}\n"));
    }
    Ok(text)
}

fn date_field(value: &str, field: &str) -> Result<chrono::NaiveDate, ApiError> {
    parse_date(value, || field.to_string()).map_err(|_| ApiError::invalid(field, format!("`{value}` is not a YYYY-MM-DD date")))
}

fn optional_date_field(value: &Option<String>, field: &str) -> Result<Option<chrono::NaiveDate>, ApiError> {
    match value.as_deref() {
        None | Some("") => Ok(None),
        Some(v) => date_field(v, field).map(Some),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RevisionBody {
    pub ward_id: String,
    pub revision: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateWard {
    #[serde(default)]
    pub config: BTreeMap<String, Value>,
}

pub async fn create_ward(
    State(app): State<AppState>,
    payload: Option<Json<CreateWard>>,
) -> Result<(StatusCode, Json<RevisionBody>), ApiError> {
    let request = payload.map(|Json(v)| v).unwrap_or_default();
    let params = ModelParams::default().with_overrides(&config_overrides(&request.config)?)?;
    let id = uuid::Uuid::new_v4().to_string();
    let session = app.store.create(id, params)?;
    Ok((
        StatusCode::CREATED,
        Json(RevisionBody {
            ward_id: session.id.clone(),
            revision: 0,
        }),
    ))
}

pub async fn list_wards(State(app): State<AppState>) -> Json<Value> {
    Json(serde_json::json!({ "wards": app.store.ids() }))
}

#[derive(Debug, Serialize)]
pub struct CaseView {
    pub id: String,
    pub onset_date: String,
    pub admission_date: Option<String>,
    pub sample_date: Option<String>,
    pub has_sequence: bool,
}

#[derive(Debug, Serialize)]
pub struct WardView {
    pub ward_id: String,
    pub revision: u64,
    pub cases: Vec<CaseView>,
    pub locations: Vec<LocationRow>,
    pub weights: Vec<WeightRow>,
    pub config: String,
}

pub async fn get_ward(State(app): State<AppState>, Path(ward): Path<String>) -> ApiResult<WardView> {
    let session = app.store.get(&ward)?;
    let p = session.current();
    let input = p.snapshot.to_input();
    Ok(Json(WardView {
        ward_id: ward,
        revision: p.revision,
        cases: p
            .state
            .cases
            .values()
            .map(|c| CaseView {
                id: c.id.clone(),
                onset_date: format_date(c.onset_date),
                admission_date: c.admission_date.map(format_date),
                sample_date: c.sample_date.map(format_date),
                has_sequence: p.snapshot.case(&c.id).is_some_and(|r| r.has_sequence),
            })
            .collect(),
        locations: input.locations,
        weights: input.weights,
        config: p.state.params.to_config_string(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsertCase {
    pub onset_date: String,
    #[serde(default)]
    pub admission_date: Option<String>,
    #[serde(default)]
    pub sample_date: Option<String>,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

async fn commit(session: &WardSession, event: Event, expected: Option<u64>) -> ApiResult<RevisionBody> {
    let revision = session.mutate(event, expected).await?;
    Ok(Json(RevisionBody {
        ward_id: session.id.clone(),
        revision,
    }))
}

pub async fn upsert_case(
    State(app): State<AppState>,
    Path((ward, case)): Path<(String, String)>,
    payload: Result<Json<UpsertCase>, JsonRejection>,
) -> ApiResult<RevisionBody> {
    let session = app.store.get(&ward)?;
    let req = body(payload)?;
    if case.trim().is_empty() {
        return Err(ApiError::invalid("id", "case id is empty"));
    }
    let row = CaseRow {
        id: case,
        onset_date: date_field(&req.onset_date, "onset_date")?,
        admission_date: optional_date_field(&req.admission_date, "admission_date")?,
        sample_date: optional_date_field(&req.sample_date, "sample_date")?,
    };
    commit(&session, Event::CaseUpserted { case: row }, req.expected_revision).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationIn {
    pub id: String,
    pub date: String,
    pub location_code: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsertLocations {
    pub rows: Vec<LocationIn>,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

fn known_case(p: &Published, id: &str, field: String) -> Result<(), ApiError> {
    if p.state.cases.contains_key(id) {
        Ok(())
    } else {
        Err(ApiError::invalid(field, format!("unknown case `{id}`")))
    }
}

pub async fn upsert_locations(
    State(app): State<AppState>,
    Path(ward): Path<String>,
    payload: Result<Json<UpsertLocations>, JsonRejection>,
) -> ApiResult<RevisionBody> {
    let session = app.store.get(&ward)?;
    let req = body(payload)?;
    let current = session.current();
    let mut rows = Vec::with_capacity(req.rows.len());
    for (i, r) in req.rows.iter().enumerate() {
        known_case(&current, &r.id, format!("rows[{i}].id"))?;
        if r.location_code.trim().is_empty() {
            return Err(ApiError::invalid(format!("rows[{i}].location_code"), "location code is empty"));
        }
        rows.push(LocationRow {
            id: r.id.clone(),
            date: date_field(&r.date, &format!("rows[{i}].date"))?,
            location_code: r.location_code.clone(),
        });
    }
    commit(&session, Event::LocationsUpserted { rows }, req.expected_revision).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightIn {
    pub id_a: String,
    pub id_b: String,
    pub date: String,
    pub weight: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsertWeights {
    pub rows: Vec<WeightIn>,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

pub async fn upsert_weights(
    State(app): State<AppState>,
    Path(ward): Path<String>,
    payload: Result<Json<UpsertWeights>, JsonRejection>,
) -> ApiResult<RevisionBody> {
    let session = app.store.get(&ward)?;
    let req = body(payload)?;
    let current = session.current();
    let mut rows = Vec::with_capacity(req.rows.len());
    for (i, r) in req.rows.iter().enumerate() {
        known_case(&current, &r.id_a, format!("rows[{i}].id_a"))?;
        known_case(&current, &r.id_b, format!("rows[{i}].id_b"))?;
        if r.id_a == r.id_b {
            return Err(ApiError::invalid(format!("rows[{i}].id_b"), "a case cannot be paired with itself"));
        }
        if !(0.0..=1.0).contains(&r.weight) {
            return Err(ApiError::invalid(format!("rows[{i}].weight"), "weight must be in [0, 1]"));
        }
        rows.push(WeightRow {
            id_a: r.id_a.clone(),
            id_b: r.id_b.clone(),
            date: date_field(&r.date, &format!("rows[{i}].date"))?,
            weight: r.weight,
        });
    }
    commit(&session, Event::WeightsUpserted { rows }, req.expected_revision).await
}

/// Multipart fields: `fasta` (required) and `expected_revision` (optional).
pub async fn upload_sequences(
    State(app): State<AppState>,
    Path(ward): Path<String>,
    mut form: Multipart,
) -> ApiResult<RevisionBody> {
    let session = app.store.get(&ward)?;
    let mut fasta = None;
    let mut expected = None;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let text = field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        match name.as_str() {
            "fasta" => fasta = Some(text),
            "expected_revision" => {
                expected = Some(
                    text.trim()
                        .parse::<u64>()
                        .map_err(|_| ApiError::invalid("expected_revision", "not a revision number"))?,
                )
            }
            other => return Err(ApiError::invalid(other, "unexpected form field")),
        }
    }
    let fasta = fasta.ok_or_else(|| ApiError::invalid("fasta", "missing FASTA file field"))?;
    commit(&session, Event::SequencesUploaded { fasta }, expected).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetParams {
    pub config: BTreeMap<String, Value>,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

pub async fn set_params(
    State(app): State<AppState>,
    Path(ward): Path<String>,
    payload: Result<Json<SetParams>, JsonRejection>,
) -> ApiResult<RevisionBody> {
    let session = app.store.get(&ward)?;
    let req = body(payload)?;
    let params = session.current().state.params.with_overrides(&config_overrides(&req.config)?)?;
    commit(
        &session,
        Event::ParamsSet {
            config: params.to_config_string(),
        },
        req.expected_revision,
    )
    .await
}

/// Query options shared by the inference endpoints.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceQuery {
    #[serde(default)]
    pub prior: Option<String>,
    #[serde(default)]
    pub genetics: Option<bool>,
    #[serde(default)]
    pub locations: Option<bool>,
    #[serde(default)]
    pub admissions: Option<bool>,
    #[serde(default)]
    pub order: Option<String>,
}

impl InferenceQuery {
    fn prior(&self) -> Result<SourcePrior, ApiError> {
        Ok(self.prior.as_deref().unwrap_or("uniform").parse::<SourcePrior>()?)
    }

    fn toggles(&self) -> DataToggles {
        DataToggles {
            use_genetics: self.genetics.unwrap_or(true),
            use_locations: self.locations.unwrap_or(true),
            use_admissions: self.admissions.unwrap_or(true),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PosteriorBody {
    pub ward_id: String,
    pub revision: u64,
    pub prior: String,
    pub toggles: DataToggles,
    pub posterior: PosteriorRecord,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

pub async fn posterior(
    State(app): State<AppState>,
    Path((ward, focal)): Path<(String, String)>,
    q: Result<Query<InferenceQuery>, QueryRejection>,
) -> ApiResult<PosteriorBody> {
    let session = app.store.get(&ward)?;
    let q = query(q)?;
    let prior = q.prior()?;
    let toggles = q.toggles();
    let published: Arc<Published> = session.current();
    let revision = published.revision;
    let record = blocking(move || {
        let engine = Engine::new(&published.snapshot);
        let candidates = engine.candidates_for(&focal);
        let post = engine.posterior(&focal, &candidates, &prior, toggles)?;
        Ok(PosteriorRecord::from(&post))
    })
    .await?;
    Ok(Json(PosteriorBody {
        ward_id: ward,
        revision,
        prior: q.prior()?.describe(),
        toggles,
        posterior: record,
    }))
}

#[derive(Debug, Serialize)]
pub struct AblationBody {
    pub ward_id: String,
    pub revision: u64,
    pub prior: String,
    pub focal: String,
    pub order: Vec<String>,
    pub stages: Vec<AblationRecord>,
}

pub async fn ablation(
    State(app): State<AppState>,
    Path((ward, focal)): Path<(String, String)>,
    q: Result<Query<InferenceQuery>, QueryRejection>,
) -> ApiResult<AblationBody> {
    let session = app.store.get(&ward)?;
    let q = query(q)?;
    let prior = q.prior()?;
    let order = q
        .order
        .as_deref()
        .unwrap_or("genetics,locations,admissions")
        .split(',')
        .map(str::parse::<DataSource>)
        .collect::<Result<Vec<_>, _>>()?;
    let published = session.current();
    let revision = published.revision;
    let prior_label = prior.describe();
    let report = blocking(move || {
        let engine = Engine::new(&published.snapshot);
        let candidates = engine.candidates_for(&focal);
        let stages = engine.ablation_sequence(&focal, &candidates, &prior, &order)?;
        let provenance = Provenance::new(&published.snapshot, prior.describe(), DataToggles::all(), vec![]);
        Ok(AblationReport::new(provenance, &focal, &stages))
    })
    .await?;
    Ok(Json(AblationBody {
        ward_id: ward,
        revision,
        prior: prior_label,
        focal: report.focal,
        order: report.order,
        stages: report.stages,
    }))
}

#[derive(Debug, Serialize)]
pub struct SummaryBody {
    pub ward_id: String,
    pub revision: u64,
    pub prior: String,
    pub toggles: DataToggles,
    pub heatmap: HeatmapMatrix,
    pub records: Vec<PosteriorRecord>,
    pub failures: Vec<FocalFailure>,
}

pub async fn summary(
    State(app): State<AppState>,
    Path(ward): Path<String>,
    q: Result<Query<InferenceQuery>, QueryRejection>,
) -> ApiResult<SummaryBody> {
    let session = app.store.get(&ward)?;
    let q = query(q)?;
    let prior = q.prior()?;
    let toggles = q.toggles();
    let published = session.current();
    let revision = published.revision;
    let prior_label = prior.describe();
    let (heatmap, records, failures) = blocking(move || {
        let engine = Engine::new(&published.snapshot);
        let mut posteriors = Vec::new();
        let mut failures = Vec::new();
        for (focal, result) in engine.all_posteriors(&prior, toggles) {
            match result {
                Ok(p) => posteriors.push(p),
                Err(e) => failures.push(FocalFailure {
                    focal,
                    error: e.to_string(),
                }),
            }
        }
        let ids: Vec<String> = published.snapshot.case_ids().map(str::to_string).collect();
        let heatmap = HeatmapMatrix::new(&ids, &posteriors);
        let records = posteriors.iter().map(PosteriorRecord::from).collect();
        Ok((heatmap, records, failures))
    })
    .await?;
    Ok(Json(SummaryBody {
        ward_id: ward,
        revision,
        prior: prior_label,
        toggles,
        heatmap,
        records,
        failures,
    }))
}
