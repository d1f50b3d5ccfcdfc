//! JSON-over-HTTP access to interactive simulation sessions and to finished
//! run folders. Every response body carries `api_version`; errors use the
//! shape `{"api_version", "error": {"code", "message", "field_paths", ...}}`.

mod error;
mod runs;
mod session;

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use amrsim::config::{apply_overrides, default_config, load_umbrella, OverrideDirective};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ErrorBody};
pub use runs::{list_runs, run_metrics, RunEntry, RunMetrics};
pub use session::{
    ActionSpaceView, HistoryEntry, HistoryView, ObservationView, ObservedPatientView, Reveal, RevealedPatient,
    RewardView, Session, SessionStore, SessionView, Status,
};

pub const API_VERSION: &str = "1";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub results_root: PathBuf,
    /// Base directory for `config_path` in session requests.
    pub config_root: PathBuf,
    pub capacity: usize,
    pub idle_timeout: Duration,
    /// Optional directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            results_root: amrsim::experiment::default_results_root(),
            config_root: PathBuf::from("."),
            capacity: 64,
            idle_timeout: Duration::from_secs(60 * 60),
            static_dir: None,
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub sessions: SessionStore,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    /// Umbrella file relative to the service's config root; the built-in
    /// defaults are used when absent.
    #[serde(default)]
    pub config_path: Option<String>,
    /// `slot=path` subconfig replacements, applied before `overrides`.
    #[serde(default)]
    pub subconfigs: Vec<String>,
    /// `dot.path=value` parameter overrides.
    #[serde(default)]
    pub overrides: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    pub actions: Vec<i64>,
}

#[derive(Serialize)]
struct Versioned<T> {
    api_version: &'static str,
    #[serde(flatten)]
    body: T,
}

fn reply<T: Serialize>(status: StatusCode, body: T) -> Response {
    (
        status,
        Json(Versioned {
            api_version: API_VERSION,
            body,
        }),
    )
        .into_response()
}

fn parse_body<T: for<'de> Deserialize<'de>>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

fn resolve_config_path(root: &Path, raw: &str) -> Result<PathBuf, ApiError> {
    let rel = Path::new(raw);
    if rel.is_absolute() || rel.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(ApiError::validation(
            "config_path must be relative to the service config root without '..'",
            vec!["config_path".into()],
        ));
    }
    Ok(root.join(rel))
}

fn build_session(state: &AppState, req: &CreateSessionRequest) -> Result<Session, ApiError> {
    let base = match &req.config_path {
        Some(p) => load_umbrella(resolve_config_path(&state.config.config_root, p)?)?.config,
        None => default_config(),
    };
    let mut directives = Vec::new();
    for s in &req.subconfigs {
        let (slot, path) = s
            .split_once('=')
            .ok_or_else(|| ApiError::validation(format!("subconfig {s:?} must look like slot=path"), vec!["subconfigs".into()]))?;
        let path = resolve_config_path(&state.config.config_root, path)?;
        directives.push(OverrideDirective::Subconfig {
            slot: slot.to_string(),
            path,
        });
    }
    for o in &req.overrides {
        directives.push(OverrideDirective::parameter(o)?);
    }
    let config = apply_overrides(&base, &directives)?;
    Ok(Session::new(uuid::Uuid::new_v4().simple().to_string(), &config, req.seed)?)
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = if body.is_empty() {
        CreateSessionRequest::default()
    } else {
        parse_body(&body)?
    };
    let session = build_session(&state, &req)?;
    let view = session.view();
    state.sessions.insert(session)?;
    Ok(reply(StatusCode::CREATED, view))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let session = state.sessions.get(&id)?;
    let view = session.lock().expect("session lock").view();
    Ok(reply(StatusCode::OK, view))
}

async fn step_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let session = state.sessions.get(&id)?;
    let req: StepRequest = parse_body(&body)?;
    let mut session = session.lock().expect("session lock");
    if session.status() == Status::Finished {
        return Err(amrsim::Error::EpisodeFinished.into());
    }
    let max = session.view().action_space.allowed_range[1];
    let mut actions = Vec::with_capacity(req.actions.len());
    for (slot, &a) in req.actions.iter().enumerate() {
        if a < 0 {
            let mut e = ApiError::from(amrsim::Error::InvalidAction { slot, value: 0, max });
            e.body.message = format!("action {a} in slot {slot} is outside [0, {max}]");
            return Err(e);
        }
        actions.push(a as usize);
    }
    let view = session.step(&actions)?;
    Ok(reply(StatusCode::OK, view))
}

async fn get_history(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let session = state.sessions.get(&id)?;
    let history = session.lock().expect("session lock").history();
    Ok(reply(StatusCode::OK, history))
}

#[derive(Serialize)]
struct Deleted {
    session_id: String,
    deleted: bool,
}

async fn delete_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    state.sessions.remove(&id)?;
    Ok(reply(StatusCode::OK, Deleted { session_id: id, deleted: true }))
}

#[derive(Serialize)]
struct RunList {
    runs: Vec<RunEntry>,
}

async fn get_runs(State(state): State<Arc<AppState>>) -> Response {
    let runs = list_runs(&state.config.results_root);
    reply(StatusCode::OK, RunList { runs })
}

async fn get_run_metrics(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    Ok(reply(StatusCode::OK, run_metrics(&state.config.results_root, &id)?))
}

async fn unknown_api() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        sessions: SessionStore::new(config.capacity, config.idle_timeout),
        config,
    });
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/step", post(step_session))
        .route("/sessions/{id}/history", get(get_history))
        .route("/runs", get(get_runs))
        .route("/runs/{id}/metrics", get(get_run_metrics))
        .fallback(unknown_api);
    let app = Router::new().nest("/api", api);
    let app = match &state.config.static_dir {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app,
    };
    app.with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: &str, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(config)).await
}
