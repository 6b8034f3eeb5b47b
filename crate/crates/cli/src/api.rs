//! HTTP API over a run directory. Reads come from the in-memory state and
//! the repository; writes are accepted only while a checkpoint window is
//! open on a live run.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use evogit_core::run::{CheckpointView, ControlError, FeedbackRecord, Phase, Run, RunControl};
use serde::Serialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::output::{self, ReadError};

#[derive(Clone)]
pub struct AppState {
    pub run: Arc<Run>,
    /// `None` when serving a run that is not executing in this process;
    /// writes are then refused.
    pub control: Option<Arc<RunControl>>,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<ReadError> for ApiError {
    fn from(e: ReadError) -> Self {
        let status = match &e {
            ReadError::NotFound(_) => StatusCode::NOT_FOUND,
            ReadError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ReadError::Run(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, json_body(output::document(&json!({ "error": self.message })))).into_response()
    }
}

fn json_body(text: String) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/json")], text)
}

type ApiResult = Result<Response, ApiError>;

fn ok(text: String) -> ApiResult {
    Ok(json_body(text).into_response())
}

/// A run served from another process is re-read before every request.
fn fresh(state: &AppState) -> Result<&Run, ApiError> {
    if state.control.is_none() {
        state
            .run
            .refresh()
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    }
    Ok(&state.run)
}

async fn graph(State(s): State<AppState>) -> ApiResult {
    ok(output::graph(fresh(&s)?))
}

async fn frontier(State(s): State<AppState>) -> ApiResult {
    ok(output::frontier(fresh(&s)?)?)
}

async fn tree(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(output::tree(fresh(&s)?, &id)?)
}

async fn notes(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(output::notes(fresh(&s)?, &id)?)
}

async fn diff(State(s): State<AppState>, Path((a, b)): Path<(String, String)>) -> ApiResult {
    ok(output::diff(fresh(&s)?, &a, &b)?)
}

#[derive(Serialize)]
struct StatusView {
    live: bool,
    #[serde(flatten)]
    phase: Phase,
    paused: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<CheckpointView>,
    rounds_done: usize,
    iterations: usize,
}

async fn status(State(s): State<AppState>) -> ApiResult {
    status_of(&s)
}

fn status_of(s: &AppState) -> ApiResult {
    let run = fresh(s)?;
    let (phase, paused, checkpoint) = match &s.control {
        Some(c) => (c.phase(), c.is_paused(), c.checkpoint()),
        None => (Phase::Idle, false, None),
    };
    ok(output::document(&StatusView {
        live: s.control.is_some(),
        phase,
        paused,
        checkpoint,
        rounds_done: run.state().rounds_done(),
        iterations: run.config().run.iterations,
    }))
}

fn control(s: &AppState) -> Result<&RunControl, ApiError> {
    s.control
        .as_deref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "the run is not executing in this server"))
}

async fn feedback(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let control = control(&s)?;
    let record: FeedbackRecord = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid feedback: {e}")))?;
    match control.submit(record) {
        Ok(()) => ok(output::document(&json!({ "accepted": true }))),
        Err(e @ ControlError::NotInCheckpoint) => Err(ApiError::new(StatusCode::CONFLICT, e.to_string())),
        Err(e @ ControlError::Invalid(_)) => Err(ApiError::new(StatusCode::BAD_REQUEST, e.to_string())),
    }
}

async fn pause(State(s): State<AppState>) -> ApiResult {
    let c = control(&s)?;
    c.pause();
    status_of(&s)
}

async fn resume(State(s): State<AppState>) -> ApiResult {
    let c = control(&s)?;
    c.resume();
    status_of(&s)
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/graph", get(graph))
        .route("/frontier", get(frontier))
        .route("/status", get(status))
        .route("/version/:id/tree", get(tree))
        .route("/version/:id/notes", get(notes))
        .route("/diff/:a/:b", get(diff))
        .route("/feedback", post(feedback))
        .route("/control/pause", post(pause))
        .route("/control/resume", post(resume))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves `router` on localhost until the process exits. Port 0 picks a
/// free port; the bound address is logged and printed.
pub fn serve_blocking(router: Router, port: u16) -> anyhow::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port))).await?;
        let addr = listener.local_addr()?;
        log::info!("serving on http://{addr}");
        println!("listening on http://{addr}");
        axum::serve(listener, router).await?;
        Ok(())
    })
}
