//! HTTP service for ward sessions.
//!
//! Every ward is an append-only event log replayed at startup. Mutations are
//! serialised per ward and published as immutable snapshots, so a posterior
//! always reads one consistent revision. Inference runs on the blocking pool.
//!
//! Routes, all under `/v1`:
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/wards` | `{"config": {"genetic.ne": 51, ...}}` (optional) |
//! | GET | `/wards` | |
//! | GET | `/wards/{ward}` | |
//! | PUT | `/wards/{ward}/cases/{case}` | `{"onset_date", "admission_date"?, "sample_date"?, "expected_revision"?}` |
//! | PUT | `/wards/{ward}/locations` | `{"rows": [{"id", "date", "location_code"}], "expected_revision"?}` |
//! | PUT | `/wards/{ward}/weights` | `{"rows": [{"id_a", "id_b", "date", "weight"}], "expected_revision"?}` |
//! | POST | `/wards/{ward}/sequences` | multipart: `fasta`, `expected_revision`? |
//! | PUT | `/wards/{ward}/params` | `{"config": {...}, "expected_revision"?}` |
//! | GET | `/wards/{ward}/cases/{case}/posterior` | query: `prior`, `genetics`, `locations`, `admissions` |
//! | GET | `/wards/{ward}/cases/{case}/ablation` | query: `prior`, `order` |
//! | GET | `/wards/{ward}/summary` | query: `prior`, `genetics`, `locations`, `admissions` |

mod api;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Request, State};
use axum::http::{header, HeaderValue, Method};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::ApiError;
use crate::store::Store;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Event logs live under `data_dir/wards/`; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
    /// Allowed CORS origins; empty allows any origin.
    pub cors_origins: Vec<String>,
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(store: Store, token: Option<String>) -> Self {
        AppState {
            store: Arc::new(store),
            token: token.map(Arc::from),
        }
    }
}

async fn require_token(State(app): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::unauthorized().into_response();
        }
    }
    next.run(request).await
}

fn cors(origins: &[String]) -> CorsLayer {
    let allow = if origins.is_empty() {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE, header::AUTHORIZATION])
}

pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    let v1 = Router::new()
        .route("/wards", post(api::create_ward).get(api::list_wards))
        .route("/wards/{ward}", get(api::get_ward))
        .route("/wards/{ward}/cases/{case}", put(api::upsert_case))
        .route("/wards/{ward}/locations", put(api::upsert_locations))
        .route("/wards/{ward}/weights", put(api::upsert_weights))
        .route("/wards/{ward}/sequences", post(api::upload_sequences))
        .route("/wards/{ward}/params", put(api::set_params))
        .route("/wards/{ward}/cases/{case}/posterior", get(api::posterior))
        .route("/wards/{ward}/cases/{case}/ablation", get(api::ablation))
        .route("/wards/{ward}/summary", get(api::summary))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(DefaultBodyLimit::max(256 * 1024 * 1024));
    Router::new()
        .nest("/v1", v1)
        .layer(cors(cors_origins))
        .with_state(state)
}

/// Replays stored wards and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let store = match &config.data_dir {
        Some(dir) => Store::open(dir)?,
        None => Store::in_memory(),
    };
    let app = router(AppState::new(store, config.token.clone()), &config.cors_origins);
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
