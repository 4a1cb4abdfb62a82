//! JSON HTTP API over a shared [`Tutor`].

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use tutor_core::curriculum::Phase;
use tutor_core::events::EventRecord;
use tutor_core::proof::Step;
use tutor_core::service::{ServiceError, SessionOptions, Tutor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

/// An error body together with its status.
pub struct ApiFailure(StatusCode, ApiError);

impl ApiFailure {
    fn bad_request(message: String) -> Self {
        ApiFailure(StatusCode::BAD_REQUEST, ApiError { code: "bad-request".into(), message })
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "unknown-session" => StatusCode::NOT_FOUND,
        "duplicate-session"
        | "we-playback-active"
        | "session-done"
        | "problem-not-completed"
        | "premature-assignment"
        | "already-assigned"
        | "incomplete-session" => StatusCode::CONFLICT,
        "bad-config" | "bad-request" => StatusCode::BAD_REQUEST,
        "classification-failed" | "replay-failed" | "report-failed" | "event-sink-failed" => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
        // Proof-kernel codes and analytics preconditions.
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<ServiceError> for ApiFailure {
    fn from(e: ServiceError) -> Self {
        let code = e.code();
        ApiFailure(status_for(code), ApiError { code: code.into(), message: e.to_string() })
    }
}

impl From<JsonRejection> for ApiFailure {
    fn from(e: JsonRejection) -> Self {
        ApiFailure::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiFailure {
    fn from(e: QueryRejection) -> Self {
        ApiFailure::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiFailure>;

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    pub student_id: String,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SinceQuery {
    pub since: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PhaseQuery {
    pub phase: Option<String>,
}

pub fn parse_phase(text: &str) -> Option<Phase> {
    match text.to_ascii_lowercase().as_str() {
        "pretest" => Some(Phase::Pretest),
        "training" => Some(Phase::Training),
        "posttest" => Some(Phase::Posttest),
        _ => None,
    }
}

pub fn router(tutor: Arc<Tutor>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/problem", get(problem))
        .route("/sessions/{id}/steps", post(submit_step))
        .route("/sessions/{id}/switch", post(switch))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/report", get(report))
        .route("/admin/analytics", get(analytics))
        .with_state(tutor)
}

async fn create_session(
    State(tutor): State<Arc<Tutor>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<tutor_core::service::SessionView>), ApiFailure> {
    let Json(req) = body?;
    let options = SessionOptions { session_id: req.session_id, seed: req.seed, forced: None };
    Ok((StatusCode::CREATED, Json(tutor.create_session(&req.student_id, options)?)))
}

async fn problem(
    State(tutor): State<Arc<Tutor>>,
    Path(id): Path<String>,
) -> ApiResult<tutor_core::service::SessionView> {
    Ok(Json(tutor.snapshot(&id)?))
}

async fn submit_step(
    State(tutor): State<Arc<Tutor>>,
    Path(id): Path<String>,
    body: Result<Json<Step>, JsonRejection>,
) -> ApiResult<tutor_core::service::StepResponse> {
    let Json(step) = body?;
    Ok(Json(tutor.submit_step(&id, &step)?))
}

async fn switch(
    State(tutor): State<Arc<Tutor>>,
    Path(id): Path<String>,
) -> ApiResult<tutor_core::service::SessionView> {
    Ok(Json(tutor.switch_strategy(&id)?))
}

async fn advance(
    State(tutor): State<Arc<Tutor>>,
    Path(id): Path<String>,
) -> ApiResult<tutor_core::service::SessionView> {
    Ok(Json(tutor.advance(&id)?))
}

/// Polling this endpoint is also the prompt clock tick.
async fn events(
    State(tutor): State<Arc<Tutor>>,
    Path(id): Path<String>,
    query: Result<Query<SinceQuery>, QueryRejection>,
) -> ApiResult<Vec<EventRecord>> {
    let Query(q) = query?;
    Ok(Json(tutor.events(&id, q.since)?))
}

async fn report(
    State(tutor): State<Arc<Tutor>>,
    Path(id): Path<String>,
) -> ApiResult<tutor_core::report::SessionReport> {
    Ok(Json(tutor.report(&id)?))
}

async fn analytics(
    State(tutor): State<Arc<Tutor>>,
    query: Result<Query<PhaseQuery>, QueryRejection>,
) -> ApiResult<tutor_core::analytics::AnalyticsReport> {
    let Query(q) = query?;
    let phase = match q.phase.as_deref() {
        None => Phase::Training,
        Some(p) => parse_phase(p).ok_or_else(|| ApiFailure::bad_request(format!("unknown phase {p:?}")))?,
    };
    Ok(Json(tutor.analytics(phase)?))
}
