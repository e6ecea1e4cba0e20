use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use wardsource_core::epidemiology::EpidemiologyError;
use wardsource_core::genomics::GenomicsError;
use wardsource_core::{IngestError, InferenceError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>, field: Option<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                status: status.as_u16(),
                code,
                message: message.into(),
                field,
            },
        }
    }

    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "validation", message, Some(field.into()))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "validation", message, None)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"), None)
    }

    pub fn conflict(expected: u64, current: u64) -> Self {
        ApiError::new(
            StatusCode::CONFLICT,
            "revision_conflict",
            format!("expected revision {expected} but the ward is at revision {current}"),
            Some("expected_revision".into()),
        )
    }

    pub fn unauthorized() -> Self {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token", None)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, None)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.body }))).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let message = e.to_string();
        let field = match &e {
            IngestError::DateParse { context, .. } | IngestError::OutsideFrame { context, .. } => Some(context.clone()),
            IngestError::Config { key, .. } => Some(format!("config.{key}")),
            IngestError::UnknownCase { id, .. } => Some(id.clone()),
            IngestError::SequenceWithoutCase(id) => Some(format!("fasta.{id}")),
            IngestError::ConflictingLocation { id, .. } => Some(format!("locations.{id}")),
            IngestError::InvalidWeight { .. } => Some("weight".into()),
            IngestError::Epidemiology(EpidemiologyError::AdmissionAfterOnset { .. }) => Some("admission_date".into()),
            IngestError::Epidemiology(EpidemiologyError::BeforeEpidemicStart { field, .. }) => Some((*field).into()),
            IngestError::Genomics(_) => Some("fasta".into()),
            _ => None,
        };
        ApiError::new(StatusCode::BAD_REQUEST, "validation", message, field)
    }
}

impl From<GenomicsError> for ApiError {
    fn from(e: GenomicsError) -> Self {
        ApiError::invalid("fasta", e.to_string())
    }
}

impl From<InferenceError> for ApiError {
    fn from(e: InferenceError) -> Self {
        match &e {
            InferenceError::UnknownCase(id) => ApiError::not_found("case", id),
            InferenceError::DegenerateEvidence(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "degenerate_evidence", e.to_string(), None)
            }
            InferenceError::InvalidPrior(_) => ApiError::invalid("prior", e.to_string()),
            InferenceError::InvalidAblationOrder(_) => ApiError::invalid("order", e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}
