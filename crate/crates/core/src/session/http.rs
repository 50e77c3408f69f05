//! JSON over HTTP for [`SessionStore`].
//!
//! ```text
//! POST /sessions                      create, returns the first batch
//! GET  /sessions/{id}                 current snapshot
//! POST /sessions/{id}/feedback        {"revision": r, "feedback": {"winner": 2}}
//! GET  /sessions/{id}/posterior?grid=0.1;0.5;0.9
//! GET  /healthz
//! ```
//!
//! Errors are `{"code": ..., "message": ...}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{parse_grid, Accepted, SessionConfig, SessionError, SessionStore};
use crate::preference::Feedback;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

struct Failure(StatusCode, ApiError);

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Failure(
            status,
            ApiError {
                code: code.into(),
                message: message.into(),
            },
        )
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::InvalidConfig(_) => Failure::new(StatusCode::BAD_REQUEST, "invalid_config", msg),
            SessionError::NotFound(_) => Failure::new(StatusCode::NOT_FOUND, "not_found", msg),
            SessionError::Conflict(_) => Failure::new(StatusCode::CONFLICT, "conflict", msg),
            SessionError::InvalidFeedback(_) => {
                Failure::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback", msg)
            }
            SessionError::InvalidGrid(_) => Failure::new(StatusCode::BAD_REQUEST, "invalid_grid", msg),
            SessionError::GridUnavailable(_) => {
                Failure::new(StatusCode::UNPROCESSABLE_ENTITY, "grid_unavailable", msg)
            }
            SessionError::Internal(_) => Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg),
        }
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<T, Failure>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub revision: u64,
    pub feedback: Feedback,
}

#[derive(Debug, Deserialize)]
struct GridQuery {
    grid: Option<String>,
}

/// Router over a shared store.
pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(snapshot))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/posterior", get(posterior))
        .with_state(store)
}

/// Starts the proposals interrupted by a restart, then serves `addr` until
/// ctrl-c.
pub async fn serve(store: Arc<SessionStore>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    for (id, job) in store.pending_jobs() {
        let s = store.clone();
        tokio::task::spawn_blocking(move || s.run_job(&id, &job));
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes, invalid: (StatusCode, &str)) -> ApiResult<T> {
    let value: serde_json::Value = serde_json::from_slice(body)
        .map_err(|e| Failure::new(StatusCode::BAD_REQUEST, "bad_json", e.to_string()))?;
    serde_json::from_value(value).map_err(|e| Failure::new(invalid.0, invalid.1, e.to_string()))
}

async fn run_blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(Failure::from)
}

async fn create(State(store): State<Arc<SessionStore>>, body: Bytes) -> ApiResult<Response> {
    let cfg: SessionConfig = parse_body(&body, (StatusCode::BAD_REQUEST, "invalid_config"))?;
    let (id, job) = store.create(cfg)?;
    let snap = run_blocking(move || store.run_job(&id, &job)).await?;
    Ok((StatusCode::CREATED, Json(snap)).into_response())
}

async fn snapshot(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(store.snapshot(&id)?).into_response())
}

async fn feedback(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    // a missing session outranks a malformed body
    store.snapshot(&id)?;
    let req: FeedbackRequest = parse_body(&body, (StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback"))?;
    match store.submit_feedback(&id, req.revision, req.feedback)? {
        Accepted::Done(snap) => Ok(Json(snap).into_response()),
        Accepted::Propose(job) => {
            let snap = run_blocking(move || store.run_job(&id, &job)).await?;
            Ok(Json(snap).into_response())
        }
    }
}

async fn posterior(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    Query(q): Query<GridQuery>,
) -> ApiResult<Response> {
    let grid = match q.grid.as_deref() {
        Some(g) => Some(parse_grid(g).map_err(|e| Failure::new(StatusCode::BAD_REQUEST, "invalid_grid", e.to_string()))?),
        None => None,
    };
    let view = run_blocking(move || store.posterior_view(&id, grid)).await?;
    Ok(Json(view).into_response())
}
