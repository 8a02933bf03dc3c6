//! The `/v1` HTTP API.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::{to_bytes, Body};
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use scenescout_core::clock::SystemClock;
use scenescout_core::exploration::{
    self, DirectionOption, ExplorationConfig, ExplorationError, ExplorationSession, SessionEvent,
    SessionId, SessionStatus,
};
use scenescout_core::geo::{GeoCoordinate, HeadingDeg};
use scenescout_core::preview::{self, Endpoint, PreviewConfig, PreviewRequest, PreviewSegment};
use scenescout_core::prompt::DescriptionTriple;
use scenescout_core::providers::{PanoId, Providers};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::error::ApiError;
use crate::store::{DataDir, JobStatus, PreviewJob, StoreError, StoredResponse};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data directory: {0}")]
    Store(#[from] StoreError),
}

type SessionCell = Arc<tokio::sync::Mutex<ExplorationSession>>;

#[derive(Default)]
struct Idempotency {
    stored: Mutex<HashMap<String, StoredResponse>>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl Idempotency {
    fn lock_for(&self, scope: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .expect("idempotency locks")
            .entry(scope.to_string())
            .or_default()
            .clone()
    }

    fn get(&self, scope: &str) -> Option<StoredResponse> {
        self.stored.lock().expect("idempotency store").get(scope).cloned()
    }
}

pub struct AppState {
    pub cfg: Config,
    providers: Providers,
    data: DataDir,
    sessions: RwLock<HashMap<String, SessionCell>>,
    previews: Mutex<HashMap<String, PreviewJob>>,
    idempotency: Idempotency,
    exploration: ExplorationConfig,
    preview: PreviewConfig,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(cfg: Config) -> Result<SharedState, StartupError> {
        let providers = cfg.build_providers()?;
        Self::with_providers(cfg, providers)
    }

    /// Opens the data directory and restores sessions, preview jobs and
    /// stored idempotent responses.
    pub fn with_providers(cfg: Config, providers: Providers) -> Result<SharedState, StartupError> {
        let data = DataDir::open(&cfg.data_dir)?;
        let sessions = data
            .load_sessions()?
            .into_iter()
            .map(|s| (s.id.0.clone(), Arc::new(tokio::sync::Mutex::new(s))))
            .collect();
        let previews = data
            .load_jobs(Utc::now())?
            .into_iter()
            .map(|j| (j.preview_id.clone(), j))
            .collect();
        let idempotency = Idempotency::default();
        {
            let mut stored = idempotency.stored.lock().expect("idempotency store");
            for r in data.load_idempotency()? {
                stored.entry(r.scope.clone()).or_insert(r);
            }
        }
        Ok(Arc::new(Self {
            exploration: cfg.exploration(),
            preview: cfg.preview(),
            cfg,
            providers,
            data,
            sessions: RwLock::new(sessions),
            previews: Mutex::new(previews),
            idempotency,
        }))
    }

    pub fn data(&self) -> &DataDir {
        &self.data
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("sessions").len()
    }

    fn session(&self, id: &str) -> Result<SessionCell, ApiError> {
        self.sessions
            .read()
            .expect("sessions")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    /// Runs blocking provider work off the async threads, bounded by the
    /// per-call timeout. On timeout the work is abandoned and its result
    /// dropped.
    async fn bounded<T: Send + 'static>(
        &self,
        f: impl FnOnce() -> T + Send + 'static,
    ) -> Result<T, ApiError> {
        match tokio::time::timeout(self.cfg.call_timeout(), tokio::task::spawn_blocking(f)).await {
            Err(_) => Err(ApiError::timeout(self.cfg.call_timeout_ms)),
            Ok(Err(e)) => Err(ApiError::internal(format!("operation failed: {e}"))),
            Ok(Ok(v)) => Ok(v),
        }
    }

    /// Applies `op` to a copy of the session and commits the copy only when
    /// the op succeeds in time and its events are on disk.
    async fn session_op<T: Send + 'static>(
        &self,
        id: &str,
        op: impl FnOnce(&Providers, &mut ExplorationSession) -> Result<T, ExplorationError> + Send + 'static,
    ) -> Result<(T, ExplorationSession), ApiError> {
        let cell = self.session(id)?;
        let mut guard = cell.lock().await;
        let mut work = guard.clone();
        let before = work.history.len();
        let providers = self.providers.clone();
        let (out, work) = self
            .bounded(move || {
                let r = op(&providers, &mut work);
                (r, work)
            })
            .await?;
        let value = out?;
        self.data
            .append_session(&work, before, Utc::now())
            .map_err(|e| ApiError::internal(e.to_string()))?;
        *guard = work.clone();
        Ok((value, work))
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut PreviewJob)) {
        let mut jobs = self.previews.lock().expect("preview jobs");
        let Some(job) = jobs.get_mut(id) else { return };
        f(job);
        job.updated_at = Utc::now();
        if let Err(e) = self.data.save_job(job) {
            tracing::error!(preview = id, error = %e, "cannot persist preview job");
        }
    }
}

/// JSON body extractor whose rejections use the API error body.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        use axum::extract::rejection::JsonRejection;
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rej) => {
                let code = match &rej {
                    JsonRejection::MissingJsonContentType(_) => "unsupported_media_type",
                    JsonRejection::JsonSyntaxError(_) => "malformed_json",
                    _ => "invalid_body",
                };
                Err(ApiError::new(StatusCode::BAD_REQUEST, code, rej.body_text()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
    pub provider_mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatePreviewResponse {
    pub preview_id: String,
    pub status: JobStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateExploreRequest {
    pub intent: String,
    pub start: GeoCoordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateExploreResponse {
    pub session_id: String,
    pub default_keywords: Vec<String>,
    pub place_type: String,
    pub status: SessionStatus,
    pub position: PanoId,
    pub heading: HeadingDeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordsRequest {
    pub additions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordsResponse {
    pub added: Vec<String>,
    pub keywords: Vec<String>,
    pub status: SessionStatus,
}

/// Compact session state without the event history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub intent: String,
    pub place_type: String,
    pub keywords: Vec<String>,
    pub position: PanoId,
    pub heading: HeadingDeg,
    pub steps_taken: u32,
    pub step_budget: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_description: Option<String>,
}

impl From<&ExplorationSession> for SessionView {
    fn from(s: &ExplorationSession) -> Self {
        Self {
            session_id: s.id.0.clone(),
            status: s.status,
            intent: s.intent.clone(),
            place_type: s.place_type.clone(),
            keywords: s.keywords.as_slice().to_vec(),
            position: s.position.clone(),
            heading: s.heading,
            steps_taken: s.steps_taken,
            step_budget: s.step_budget,
            last_description: s.last_description.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Still walking; the next step describes the next block.
    Block,
    /// Arrived at an intersection or dead end; fetch directions next.
    Intersection,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub position: PanoId,
    pub heading: HeadingDeg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple: Option<DescriptionTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub kind: StepKind,
    /// The block walked along in this step.
    pub block: BlockOutcome,
    pub dead_end: bool,
    pub state: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionsResponse {
    pub position: PanoId,
    pub options: Vec<DirectionOption>,
    pub suggested: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChooseRequest {
    pub idx: usize,
}

async fn health(State(st): State<SharedState>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        provider_mode: st.cfg.mode.as_str().into(),
    })
}

fn validate_endpoint(which: &str, e: &Endpoint) -> Result<(), ApiError> {
    match e {
        Endpoint::Query(q) if q.trim().is_empty() => {
            Err(ApiError::bad_request(format!("{which} is empty")))
        }
        _ => Ok(()),
    }
}

async fn create_preview(
    State(st): State<SharedState>,
    ApiJson(req): ApiJson<PreviewRequest>,
) -> Result<(StatusCode, Json<CreatePreviewResponse>), ApiError> {
    if req.destination_name.trim().is_empty() {
        return Err(ApiError::bad_request("destination_name is empty"));
    }
    validate_endpoint("origin", &req.origin)?;
    validate_endpoint("destination", &req.destination)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let now = Utc::now();
    let job = PreviewJob {
        preview_id: id.clone(),
        status: JobStatus::Pending,
        request: req.clone(),
        segments: Vec::new(),
        result: None,
        error: None,
        created_at: now,
        updated_at: now,
    };
    st.data
        .save_job(&job)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    st.previews.lock().expect("preview jobs").insert(id.clone(), job);
    let worker = st.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || run_preview(&worker, &job_id, &req));
    Ok((
        StatusCode::ACCEPTED,
        Json(CreatePreviewResponse {
            preview_id: id,
            status: JobStatus::Pending,
        }),
    ))
}

fn run_preview(st: &AppState, id: &str, req: &PreviewRequest) {
    let mut on_segment = |seg: &PreviewSegment| {
        st.update_job(id, |j| {
            j.status = JobStatus::Partial;
            j.segments.push(seg.clone());
        })
    };
    match preview::generate_preview(&st.providers, req, &st.preview, &SystemClock, &mut on_segment) {
        Ok(result) => {
            if let Err(e) = st.data.save_preview_log(id, &result) {
                tracing::error!(preview = id, error = %e, "cannot write usage log");
            }
            st.update_job(id, |j| {
                j.status = JobStatus::Complete;
                j.segments = result.segments.clone();
                j.result = Some(result);
            });
        }
        Err(e) => {
            tracing::warn!(preview = id, error = %e, "preview failed");
            st.update_job(id, |j| {
                j.status = JobStatus::Failed;
                j.error = Some(ApiError::from(e).body);
            });
        }
    }
}

async fn get_preview(
    State(st): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<PreviewJob>, ApiError> {
    st.previews
        .lock()
        .expect("preview jobs")
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("preview", &id))
}

async fn create_explore(
    State(st): State<SharedState>,
    ApiJson(req): ApiJson<CreateExploreRequest>,
) -> Result<Json<CreateExploreResponse>, ApiError> {
    if req.intent.trim().is_empty() {
        return Err(ApiError::bad_request("intent is empty"));
    }
    let id = SessionId(uuid::Uuid::new_v4().simple().to_string());
    let providers = st.providers.clone();
    let cfg = st.exploration;
    let session = st
        .bounded(move || exploration::start_session(&providers, id, &req.intent, req.start, &cfg))
        .await??;
    st.data
        .append_session(&session, 0, Utc::now())
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let out = CreateExploreResponse {
        session_id: session.id.0.clone(),
        default_keywords: session.keywords.as_slice().to_vec(),
        place_type: session.place_type.clone(),
        status: session.status,
        position: session.position.clone(),
        heading: session.heading,
    };
    st.sessions
        .write()
        .expect("sessions")
        .insert(session.id.0.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    Ok(Json(out))
}

async fn add_keywords(
    State(st): State<SharedState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<KeywordsRequest>,
) -> Result<Json<KeywordsResponse>, ApiError> {
    let (added, s) = st
        .session_op(&id, move |_, s| exploration::add_keywords(s, &req.additions))
        .await?;
    Ok(Json(KeywordsResponse {
        added,
        keywords: s.keywords.as_slice().to_vec(),
        status: s.status,
    }))
}

async fn step(
    State(st): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<StepResponse>, ApiError> {
    let cfg = st.exploration;
    let ((block, dead_end), s) = st
        .session_op(&id, move |p, s| {
            let (position, heading) = (s.position.clone(), s.heading);
            let outcome = exploration::describe_block(p, s, &cfg)?;
            exploration::step_forward(p, s)?;
            let block = BlockOutcome {
                position,
                heading,
                error: outcome.as_ref().err().cloned(),
                triple: outcome.ok(),
            };
            let dead_end = matches!(s.history.last(), Some(SessionEvent::DeadEnd { .. }));
            Ok((block, dead_end))
        })
        .await?;
    let kind = match s.status {
        SessionStatus::AtIntersection => StepKind::Intersection,
        SessionStatus::Ended => StepKind::Ended,
        _ => StepKind::Block,
    };
    Ok(Json(StepResponse {
        kind,
        block,
        dead_end,
        state: SessionView::from(&s),
    }))
}

/// Suggestion reason and error recorded since arriving at the current
/// position.
fn suggestion_note(s: &ExplorationSession) -> (Option<String>, Option<String>) {
    for e in s.history.iter().rev() {
        match e {
            SessionEvent::SuggestionMade { reason, error, .. } => {
                return (reason.clone(), error.clone())
            }
            SessionEvent::Moved { .. } | SessionEvent::Started { .. } => break,
            _ => {}
        }
    }
    (None, None)
}

async fn directions(
    State(st): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<DirectionsResponse>, ApiError> {
    let (_, s) = st
        .session_op(&id, |p, s| {
            exploration::enumerate_directions(p, s)?;
            // ask the selector once per arrival
            if matches!(s.history.last(), Some(SessionEvent::DirectionsOffered { .. })) {
                exploration::suggest_direction(p, s)?;
            }
            Ok(())
        })
        .await?;
    let (suggestion_reason, suggestion_error) = suggestion_note(&s);
    Ok(Json(DirectionsResponse {
        position: s.position.clone(),
        options: s.offered.clone().unwrap_or_default(),
        suggested: s.suggestion(),
        suggestion_reason,
        suggestion_error,
    }))
}

async fn choose(
    State(st): State<SharedState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<ChooseRequest>,
) -> Result<Json<SessionView>, ApiError> {
    let (_, s) = st
        .session_op(&id, move |p, s| exploration::choose_direction(p, s, req.idx))
        .await?;
    Ok(Json(SessionView::from(&s)))
}

async fn end(
    State(st): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let (_, s) = st
        .session_op(&id, |_, s| exploration::end_session(s))
        .await?;
    Ok(Json(SessionView::from(&s)))
}

async fn session_state(
    State(st): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<ExplorationSession>, ApiError> {
    let cell = st.session(&id)?;
    let s = cell.lock().await.clone();
    Ok(Json(s))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// Replays the first non-5xx response for a repeated POST with the same
/// `Idempotency-Key` on the same path. Requests with one key are serialized.
async fn idempotency(State(st): State<SharedState>, req: Request, next: Next) -> Response {
    if req.method() != Method::POST {
        return next.run(req).await;
    }
    let Some(key) = req.headers().get(IDEMPOTENCY_HEADER) else {
        return next.run(req).await;
    };
    let key = match key.to_str() {
        Ok(k) if !k.trim().is_empty() && k.len() <= 255 => k.trim().to_string(),
        _ => {
            return ApiError::bad_request("Idempotency-Key must be 1 to 255 visible characters")
                .into_response()
        }
    };
    let scope = format!("{} {} {}", req.method(), req.uri().path(), key);
    let lock = st.idempotency.lock_for(&scope);
    let _guard = lock.lock().await;
    if let Some(r) = st.idempotency.get(&scope) {
        let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::OK);
        let mut resp = (status, Json(r.body)).into_response();
        resp.headers_mut()
            .insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
        return resp;
    }
    let resp = next.run(req).await;
    if resp.status().is_server_error() {
        return resp;
    }
    let (parts, body) = resp.into_parts();
    let bytes = match to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e.to_string()).into_response(),
    };
    let stored = StoredResponse {
        scope: scope.clone(),
        status: parts.status.as_u16(),
        body: serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    };
    if let Err(e) = st.data.append_idempotency(&stored) {
        tracing::error!(error = %e, "cannot persist idempotent response");
    }
    st.idempotency
        .stored
        .lock()
        .expect("idempotency store")
        .insert(scope, stored);
    Response::from_parts(parts, Body::from(bytes))
}

async fn auth(State(st): State<SharedState>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.cfg.api_token {
        let ok = req.uri().path() == "/v1/health"
            || req
                .headers()
                .get("authorization")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "))
                .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

pub fn router(st: SharedState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/preview", post(create_preview))
        .route("/v1/preview/{id}", get(get_preview))
        .route("/v1/explore", post(create_explore))
        .route("/v1/explore/{id}/keywords", post(add_keywords))
        .route("/v1/explore/{id}/step", post(step))
        .route("/v1/explore/{id}/directions", get(directions))
        .route("/v1/explore/{id}/choose", post(choose))
        .route("/v1/explore/{id}/end", post(end))
        .route("/v1/explore/{id}/state", get(session_state))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(st.clone(), idempotency))
        .layer(middleware::from_fn_with_state(st.clone(), auth))
        .with_state(st)
}

/// Binds `cfg.bind` and serves until ctrl-c.
pub async fn serve(st: SharedState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&st.cfg.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, mode = st.cfg.mode.as_str(), "listening");
    axum::serve(listener, router(st))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
