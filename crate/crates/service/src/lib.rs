//! HTTP/JSON facade over the simulator and loop analysis.
//!
//! Endpoints:
//!
//! - `GET /models` lists every model found in the model directory.
//! - `POST /models/{id}/run` runs a model; the body is a [`RunRequest`].
//! - `GET /models/{id}/loops` reports feedback loops at the initial operating point.
//!
//! Models are loaded once at startup and never mutated afterwards.

use std::collections::BTreeMap;
use std::io;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use stockflow_core::analysis::{build_causal_graph, enumerate_loops};
use stockflow_core::engine::{initial_point, simulate_with_deadline, RunError};
use stockflow_core::wire::{ErrorBody, LoadFailure, LoopsPayload, ModelList, ModelSummary, RunPayload, RunRequest};
use stockflow_core::{load_model, CheckedModel, RunSpec};
use tower_http::cors::CorsLayer;

/// Wall-clock limit for a single run request.
pub const DEFAULT_RUN_BUDGET: Duration = Duration::from_secs(2);

/// Every model in a directory, keyed by file stem.
#[derive(Debug, Default)]
pub struct Catalog {
    models: BTreeMap<String, CheckedModel>,
    errors: Vec<LoadFailure>,
}

impl Catalog {
    /// Loads every `*.sdm` file in `dir`. Files that fail to load are recorded, not fatal.
    pub fn load_dir(dir: &Path) -> io::Result<Catalog> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "sdm"))
            .collect();
        paths.sort();
        let mut catalog = Catalog::default();
        for path in paths {
            let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let loaded = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|src| load_model(&id, &src).map_err(|e| e.to_string()));
            match loaded {
                Ok(model) => {
                    catalog.models.insert(id, model);
                }
                Err(message) => catalog.errors.push(LoadFailure { file, message }),
            }
        }
        Ok(catalog)
    }

    pub fn insert(&mut self, id: impl Into<String>, model: CheckedModel) {
        self.models.insert(id.into(), model);
    }

    pub fn get(&self, id: &str) -> Option<&CheckedModel> {
        self.models.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn errors(&self) -> &[LoadFailure] {
        &self.errors
    }

    pub fn summary(&self) -> ModelList {
        ModelList {
            models: self.models.iter().map(|(id, m)| ModelSummary::new(id, m.definition())).collect(),
            errors: self.errors.clone(),
        }
    }
}

#[derive(Clone)]
struct AppState {
    catalog: Arc<Catalog>,
    budget: Duration,
}

pub fn router(catalog: Catalog) -> Router {
    router_with_budget(catalog, DEFAULT_RUN_BUDGET)
}

pub fn router_with_budget(catalog: Catalog, budget: Duration) -> Router {
    let state = AppState { catalog: Arc::new(catalog), budget };
    Router::new()
        .route("/models", get(list_models))
        .route("/models/{id}/run", post(run_model))
        .route("/models/{id}/loops", get(model_loops))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves `app` on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, app: Router) -> io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, app).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, app: Router) -> io::Result<()> {
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}

/// The operations behind each endpoint, usable without HTTP.
pub mod handlers {
    use super::*;

    /// Runs `model` and wraps the result. Invalid settings come back as field errors.
    pub fn run(id: &str, model: &CheckedModel, request: &RunRequest, deadline: Option<Instant>) -> Result<RunPayload, ErrorBody> {
        let spec: RunSpec = request.to_spec().map_err(invalid)?;
        let RunError::InvalidSpec(fields) = match simulate_with_deadline(&model.compiled, &spec, deadline) {
            Ok(result) => return Ok(RunPayload::new(id, model.definition(), result)),
            Err(e) => e,
        };
        Err(invalid(fields))
    }

    pub fn loops(id: &str, model: &CheckedModel) -> Result<LoopsPayload, ErrorBody> {
        let spec = RunSpec::default();
        let failed = |e: &dyn std::fmt::Display| plain(e.to_string());
        let point = initial_point(&model.compiled, &spec).map_err(|e| failed(&e))?;
        let graph = build_causal_graph(&model.compiled, &point, &spec.overrides).map_err(|e| failed(&e))?;
        let report = enumerate_loops(&graph).map_err(|e| failed(&e))?;
        Ok(LoopsPayload { model: id.to_owned(), report })
    }

    fn invalid(fields: Vec<stockflow_core::engine::SpecError>) -> ErrorBody {
        ErrorBody { error: "invalid run request".into(), fields, run: None }
    }

    pub(crate) fn plain(error: String) -> ErrorBody {
        ErrorBody { error, fields: Vec::new(), run: None }
    }
}

fn reply(status: StatusCode, body: ErrorBody) -> Response {
    (status, Json(body)).into_response()
}

fn not_found(id: &str) -> Response {
    reply(StatusCode::NOT_FOUND, handlers::plain(format!("unknown model `{id}`")))
}

async fn list_models(State(state): State<AppState>) -> Json<ModelList> {
    Json(state.catalog.summary())
}

async fn run_model(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    if state.catalog.get(&id).is_none() {
        return not_found(&id);
    }
    let request: RunRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RunRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => return reply(StatusCode::BAD_REQUEST, handlers::plain(format!("invalid JSON body: {e}"))),
        }
    };
    let deadline = Instant::now() + state.budget;
    let catalog = state.catalog.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let model = catalog.get(&id).expect("checked above");
        handlers::run(&id, model, &request, Some(deadline))
    })
    .await;
    match outcome {
        Ok(Ok(payload)) if payload.fault.is_none() => Json(payload).into_response(),
        Ok(Ok(payload)) => {
            let fault = payload.fault.as_ref().expect("checked");
            let error = format!("run stopped: {fault}");
            reply(StatusCode::UNPROCESSABLE_ENTITY, ErrorBody { error, fields: Vec::new(), run: Some(Box::new(payload)) })
        }
        Ok(Err(body)) => reply(StatusCode::BAD_REQUEST, body),
        Err(e) => reply(StatusCode::INTERNAL_SERVER_ERROR, handlers::plain(format!("run task failed: {e}"))),
    }
}

async fn model_loops(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(model) = state.catalog.get(&id) else {
        return not_found(&id);
    };
    match handlers::loops(&id, model) {
        Ok(payload) => Json(payload).into_response(),
        Err(body) => reply(StatusCode::UNPROCESSABLE_ENTITY, body),
    }
}
