//! HTTP front end for the rating service. Every request is authenticated by a
//! per-rater bearer token; all mutations go through one locked
//! [`RatingService`], so issuance and appends are totally ordered.

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use oversight_core::domain::{catalog, Catalog, Dimension, DimensionRating, LikertValue, RaterId, ScreeningResult, StudyId};
use oversight_core::service::{
    AdmissionAttempt, AdmissionItemResponse, AisSubmission, AssignmentId, KeypointLabel, NextStep, RatingAck, RatingService,
    ServiceError, StudyStatus, Task, TutorialOutcome,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

/// Bearer token to rater mapping, issued out of band.
pub type Tokens = HashMap<String, RaterId>;

pub struct AppState {
    service: Mutex<RatingService>,
    tokens: Tokens,
}

impl AppState {
    pub fn new(service: RatingService, tokens: Tokens) -> Arc<Self> {
        Arc::new(AppState { service: Mutex::new(service), tokens })
    }

    /// Locks the service. A poisoned lock is recovered: the state only ever
    /// changes by applying an already-persisted event.
    pub fn service(&self) -> MutexGuard<'_, RatingService> {
        self.service.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    Forbidden(String),
    Service(ServiceError),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::Service(e)
    }
}

fn status_for(e: &ServiceError) -> StatusCode {
    use ServiceError::*;
    match e {
        NotAdmitted(_) | WrongRater(_) => StatusCode::FORBIDDEN,
        UnknownStudy(_) | UnknownAssignment(_) | UnknownItem(_) => StatusCode::NOT_FOUND,
        StudyClosed(_) | StaleAssignment(_) | OutOfOrder { .. } | DuplicateDimension(_) | DuplicateStudy(_)
        | WrongTaskKind(_) => StatusCode::CONFLICT,
        InvalidScreening { .. } | AssistanceNotShown(_) | InvalidRating(_) | MissingKeypointLabel(_)
        | UnknownKeypoint(_) | DuplicateKeypointLabel(_) | InvalidStudy(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Io(_) | CorruptLog(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error, message) = match self {
            ApiError::Unauthorized => {
                (StatusCode::UNAUTHORIZED, "unauthorized".to_string(), "missing or unknown bearer token".to_string())
            }
            ApiError::Forbidden(m) => (StatusCode::FORBIDDEN, "wrong_rater".to_string(), m),
            ApiError::Service(e) => {
                if matches!(e, ServiceError::Io(_) | ServiceError::CorruptLog(_)) {
                    tracing::error!(error = %e, "event log failure");
                }
                (status_for(&e), e.code().to_string(), e.to_string())
            }
        };
        (status, Json(ErrorBody { error, message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn authenticate(state: &AppState, headers: &HeaderMap) -> Result<RaterId, ApiError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(ApiError::Unauthorized)?;
    state.tokens.get(token.trim()).cloned().ok_or(ApiError::Unauthorized)
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub rater: RaterId,
    pub study: Option<StudyId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NextTaskResponse {
    /// `None` when the queue is empty.
    pub task: Option<Task>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningRequest {
    pub assignment_id: AssignmentId,
    pub answers: Vec<bool>,
    #[serde(default)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningResponse {
    pub assignment_id: AssignmentId,
    pub next: NextStep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRequest {
    pub assignment_id: AssignmentId,
    pub rating: DimensionRating,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub assignment_id: AssignmentId,
    pub dimension: Dimension,
    pub helpfulness: LikertValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AisRequest {
    pub assignment_id: AssignmentId,
    pub labels: Vec<KeypointLabel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionRequest {
    pub responses: Vec<AdmissionItemResponse>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TutorialRequest {
    pub item_id: String,
    pub rating: DimensionRating,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ack {
    pub assignment_id: AssignmentId,
    pub accepted: bool,
}

async fn next_task(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<NextQuery>,
) -> ApiResult<NextTaskResponse> {
    let rater = authenticate(&state, &headers)?;
    if rater != q.rater {
        return Err(ApiError::Forbidden(format!("token does not belong to rater `{}`", q.rater)));
    }
    let task = state.service().next_task(&rater, q.study.as_ref())?;
    Ok(Json(NextTaskResponse { task }))
}

async fn screening(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<ScreeningRequest>,
) -> ApiResult<ScreeningResponse> {
    let rater = authenticate(&state, &headers)?;
    let result = ScreeningResult::from_answers(req.answers, req.elapsed_ms);
    let next = state.service().submit_screening(&rater, &req.assignment_id, result)?;
    Ok(Json(ScreeningResponse { assignment_id: req.assignment_id, next }))
}

async fn ratings(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<RatingRequest>,
) -> ApiResult<RatingAck> {
    let rater = authenticate(&state, &headers)?;
    Ok(Json(state.service().submit_rating(&rater, &req.assignment_id, req.rating)?))
}

async fn assistance_feedback(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<FeedbackRequest>,
) -> ApiResult<Ack> {
    let rater = authenticate(&state, &headers)?;
    state.service().submit_assistance_feedback(&rater, &req.assignment_id, req.dimension, req.helpfulness)?;
    Ok(Json(Ack { assignment_id: req.assignment_id, accepted: true }))
}

async fn ais(State(state): State<Arc<AppState>>, headers: HeaderMap, Json(req): Json<AisRequest>) -> ApiResult<Ack> {
    let rater = authenticate(&state, &headers)?;
    state.service().submit_ais(&rater, &req.assignment_id, AisSubmission { labels: req.labels })?;
    Ok(Json(Ack { assignment_id: req.assignment_id, accepted: true }))
}

async fn admission(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<AdmissionRequest>,
) -> ApiResult<AdmissionAttempt> {
    let rater = authenticate(&state, &headers)?;
    Ok(Json(state.service().submit_admission(&rater, &req.responses)?))
}

async fn tutorial(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<TutorialRequest>,
) -> ApiResult<TutorialOutcome> {
    let rater = authenticate(&state, &headers)?;
    Ok(Json(state.service().tutorial_step(&rater, &req.item_id, &req.rating)?))
}

async fn taxonomy() -> Json<Catalog> {
    Json(catalog())
}

async fn study_status(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<StudyStatus> {
    authenticate(&state, &headers)?;
    Ok(Json(state.service().study_status(&StudyId(id))?))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/tasks/next", get(next_task))
        .route("/api/v1/screening", post(screening))
        .route("/api/v1/ratings", post(ratings))
        .route("/api/v1/assistance-feedback", post(assistance_feedback))
        .route("/api/v1/ais", post(ais))
        .route("/api/v1/admission", post(admission))
        .route("/api/v1/tutorial", post(tutorial))
        .route("/api/v1/taxonomy", get(taxonomy))
        .route("/api/v1/studies/{id}/status", get(study_status))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "rating service listening");
    axum::serve(listener, router(state)).await
}
