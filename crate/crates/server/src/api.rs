//! HTTP+JSON endpoints and the push stream.
//!
//! Every session sits behind its own mutex, so requests on different
//! sessions run concurrently while mutations of one session are serialized
//! through its executor. After each mutation the full view is re-rendered
//! into an immutable snapshot that state reads serve without taking the
//! session lock.

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

use hoi_core::config::EngineConfig;
use hoi_core::controller::Assignment;
use hoi_core::event::{Field, Frame, Hand, Origin};
use hoi_core::exec::{AnnotatorResponse, SystemClock};
use hoi_core::session::{
    DataRoot, NextIntervention, PushMessage, Session, SessionError, SessionView, DOCUMENT_VERSION,
};

/// Messages buffered per subscriber before it is told to resync.
const PUSH_CAPACITY: usize = 256;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    version: u32,
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<serde_json::Value>,
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Session(e) => match e {
                SessionError::UnknownSession(_) | SessionError::UnknownEvent(_) => StatusCode::NOT_FOUND,
                SessionError::StaleIntervention { .. } | SessionError::NoActiveEvent(_) => StatusCode::CONFLICT,
                SessionError::Config(_) => StatusCode::BAD_REQUEST,
                SessionError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            },
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Internal(_) => "internal_error",
            ApiError::Session(e) => e.code(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let details = match &self {
            ApiError::Session(SessionError::ValidationFailed(issues)) => serde_json::to_value(issues).ok(),
            ApiError::Session(SessionError::StaleIntervention { got, outstanding }) => {
                Some(serde_json::json!({ "got": got, "outstanding": outstanding }))
            }
            _ => None,
        };
        let body = ErrorBody {
            version: DOCUMENT_VERSION,
            code: self.code(),
            message: self.to_string(),
            details,
        };
        (self.status(), Json(body)).into_response()
    }
}

/// A request body with an optional `version` tag that must match
/// [`DOCUMENT_VERSION`] when present.
pub struct Doc<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Doc<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(value): Json<serde_json::Value> =
            Json::from_request(req, state).await.map_err(|e: JsonRejection| ApiError::BadRequest(e.body_text()))?;
        match value.get("version") {
            None => {}
            Some(v) if v.as_u64() == Some(DOCUMENT_VERSION as u64) => {}
            Some(v) => return Err(ApiError::BadRequest(format!("unsupported document version {v}"))),
        }
        serde_json::from_value(value).map(Doc).map_err(|e| ApiError::BadRequest(e.to_string()))
    }
}

/// Wraps a response body that carries no version tag of its own.
#[derive(Serialize)]
pub struct Versioned<T> {
    pub version: u32,
    #[serde(flatten)]
    pub body: T,
}

fn versioned<T>(body: T) -> Json<Versioned<T>> {
    Json(Versioned {
        version: DOCUMENT_VERSION,
        body,
    })
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub clip: String,
    /// Overrides the server's default engine configuration.
    #[serde(default)]
    pub config: Option<EngineConfig>,
}

#[derive(Debug, Deserialize)]
pub struct CreateEvent {
    pub hand: Hand,
    pub t_s: Frame,
    pub t_e: Frame,
}

#[derive(Debug, Deserialize)]
pub struct HandRequest {
    pub hand: Hand,
}

#[derive(Debug, Deserialize)]
pub struct Respond {
    pub hand: Hand,
    pub intervention: u64,
    pub response: AnnotatorResponse,
}

#[derive(Debug, Deserialize)]
pub struct Confirm {
    pub fields: Vec<Field>,
}

#[derive(Debug, Deserialize)]
pub struct Edit {
    pub values: Vec<Assignment>,
}

#[derive(Debug, Deserialize)]
pub struct MetricsQuery {
    #[serde(default)]
    pub format: Option<String>,
}

#[derive(Serialize)]
struct SessionList {
    sessions: Vec<String>,
}

struct Slot {
    session: Mutex<Session>,
    view: RwLock<Arc<SessionView>>,
    push: broadcast::Sender<PushMessage>,
}

impl Slot {
    fn new(session: Session) -> Arc<Slot> {
        let view = Arc::new(session.view());
        Arc::new(Slot {
            session: Mutex::new(session),
            view: RwLock::new(view),
            push: broadcast::channel(PUSH_CAPACITY).0,
        })
    }

    fn view(&self) -> Arc<SessionView> {
        self.view.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Shared service state.
pub struct AppState {
    root: DataRoot,
    config: EngineConfig,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    pub fn new(root: DataRoot, config: EngineConfig) -> Arc<AppState> {
        Arc::new(AppState {
            root,
            config,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    fn cached(&self, id: &str) -> Option<Arc<Slot>> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    fn insert(&self, id: String, slot: Arc<Slot>) -> Arc<Slot> {
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .entry(id)
            .or_insert(slot)
            .clone()
    }

    /// Finds an open session, reopening it from disk (by replay) if needed.
    async fn slot(self: &Arc<Self>, id: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(slot) = self.cached(id) {
            return Ok(slot);
        }
        if !is_plain_name(id) {
            return Err(SessionError::UnknownSession(id.to_string()).into());
        }
        let this = self.clone();
        let id = id.to_string();
        blocking(move || {
            let session = Session::open(&this.root, &id, Box::new(SystemClock))?;
            Ok(this.insert(id, Slot::new(session)))
        })
        .await
    }
}

/// Session and clip names become directory names.
fn is_plain_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

/// Runs one mutation under the session lock, refreshes the snapshot and
/// pushes the messages derived from the result.
async fn mutate<T: Send + 'static>(
    state: &Arc<AppState>,
    id: &str,
    f: impl FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
    pushed: impl FnOnce(&T) -> Vec<PushMessage> + Send + 'static,
) -> Result<T, ApiError> {
    let slot = state.slot(id).await?;
    blocking(move || {
        let mut session = slot.session.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        let result = f(&mut session);
        *slot.view.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(session.view());
        let out = result?;
        for msg in pushed(&out) {
            // no subscribers is fine
            let _ = slot.push.send(msg);
        }
        Ok(out)
    })
    .await
}

async fn read<T: Send + 'static>(
    state: &Arc<AppState>,
    id: &str,
    f: impl FnOnce(&Session) -> T + Send + 'static,
) -> Result<T, ApiError> {
    let slot = state.slot(id).await?;
    blocking(move || {
        let session = slot.session.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        Ok(f(&session))
    })
    .await
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Doc(req): Doc<CreateSession>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    if !is_plain_name(&req.clip) {
        return Err(ApiError::BadRequest(format!("invalid clip name `{}`", req.clip)));
    }
    let this = state.clone();
    let slot = blocking(move || {
        let config = req.config.unwrap_or_else(|| this.config.clone());
        let session = Session::create(&this.root, &req.clip, config, Box::new(SystemClock))?;
        Ok(this.insert(session.id().to_string(), Slot::new(session)))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(slot.view().as_ref().clone())))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Versioned<SessionList>> {
    versioned(SessionList {
        sessions: state.root.session_ids(),
    })
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(read(&state, &id, |s| s.meta().clone()).await?).into_response())
}

async fn get_state(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = state.slot(&id).await?;
    Ok(Json(slot.view().as_ref().clone()).into_response())
}

async fn create_event(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Doc(req): Doc<CreateEvent>,
) -> Result<Response, ApiError> {
    let delta = mutate(
        &state,
        &id,
        move |s| s.create_event(req.hand, req.t_s, req.t_e),
        |d| vec![PushMessage::Delta(d.clone())],
    )
    .await?;
    Ok((StatusCode::CREATED, Json(delta)).into_response())
}

async fn activate(
    State(state): State<Arc<AppState>>,
    Path((id, event)): Path<(String, usize)>,
) -> Result<Response, ApiError> {
    mutate(&state, &id, move |s| s.activate(event), |_| Vec::new()).await?;
    let slot = state.slot(&id).await?;
    Ok(Json(slot.view().as_ref().clone()).into_response())
}

async fn next_intervention(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Doc(req): Doc<HandRequest>,
) -> Result<Response, ApiError> {
    let next = mutate(
        &state,
        &id,
        move |s| s.next_intervention(req.hand),
        |n| match n {
            NextIntervention::Ask(issued) => vec![PushMessage::Intervention(issued.clone())],
            NextIntervention::Applied { intervention, delta } => vec![
                PushMessage::Intervention(intervention.clone()),
                PushMessage::Delta(delta.clone()),
            ],
            _ => Vec::new(),
        },
    )
    .await?;
    Ok(versioned(next).into_response())
}

async fn respond(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Doc(req): Doc<Respond>,
) -> Result<Response, ApiError> {
    let delta = mutate(
        &state,
        &id,
        move |s| s.respond(req.hand, req.intervention, req.response.by(Origin::Human)),
        |d| vec![PushMessage::Delta(d.clone())],
    )
    .await?;
    Ok(Json(delta).into_response())
}

async fn confirm(
    State(state): State<Arc<AppState>>,
    Path((id, event)): Path<(String, usize)>,
    Doc(req): Doc<Confirm>,
) -> Result<Response, ApiError> {
    let delta = mutate(
        &state,
        &id,
        move |s| s.confirm(event, &req.fields, Origin::Human),
        |d| vec![PushMessage::Delta(d.clone())],
    )
    .await?;
    Ok(Json(delta).into_response())
}

async fn edit(
    State(state): State<Arc<AppState>>,
    Path((id, event)): Path<(String, usize)>,
    Doc(req): Doc<Edit>,
) -> Result<Response, ApiError> {
    let delta = mutate(
        &state,
        &id,
        move |s| s.edit(event, &req.values, Origin::Human),
        |d| vec![PushMessage::Delta(d.clone())],
    )
    .await?;
    Ok(Json(delta).into_response())
}

async fn save(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let summary = mutate(
        &state,
        &id,
        |s| s.save(),
        |s| {
            vec![PushMessage::Saved {
                session: s.session.clone(),
            }]
        },
    )
    .await?;
    Ok(Json(summary).into_response())
}

async fn export_log(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let text = read(&state, &id, |s| {
        s.log()
            .iter()
            .map(|r| serde_json::to_string(r).map(|l| l + "\n"))
            .collect::<Result<String, _>>()
    })
    .await?
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn metrics(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MetricsQuery>,
) -> Result<Response, ApiError> {
    let metrics = read(&state, &id, |s| s.metrics()).await?;
    match q.format.as_deref() {
        None | Some("json") => Ok(versioned(metrics).into_response()),
        Some("csv") => Ok(([(header::CONTENT_TYPE, "text/csv")], metrics.to_csv()).into_response()),
        Some(other) => Err(ApiError::BadRequest(format!("unknown metrics format `{other}`"))),
    }
}

/// Server-sent events: one `delta`, `intervention` or `saved` event per
/// push message. A subscriber that falls behind receives `resync` and
/// should reload the full state.
async fn stream(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let slot = state.slot(&id).await?;
    let rx = slot.push.subscribe();
    let events = stream::unfold(rx, |mut rx| async move {
        let event = match rx.recv().await {
            Ok(msg) => {
                let name = match &msg {
                    PushMessage::Delta(_) => "delta",
                    PushMessage::Intervention(_) => "intervention",
                    PushMessage::Saved { .. } => "saved",
                };
                SseEvent::default().event(name).json_data(&msg).unwrap_or_default()
            }
            Err(broadcast::error::RecvError::Lagged(_)) => SseEvent::default().event("resync").data("{}"),
            Err(broadcast::error::RecvError::Closed) => return None,
        };
        Some((Ok(event), rx))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/state", get(get_state))
        .route("/v1/sessions/{id}/stream", get(stream))
        .route("/v1/sessions/{id}/events", post(create_event))
        .route("/v1/sessions/{id}/events/{event}/activate", post(activate))
        .route("/v1/sessions/{id}/events/{event}/confirm", post(confirm))
        .route("/v1/sessions/{id}/events/{event}/edit", post(edit))
        .route("/v1/sessions/{id}/next", post(next_intervention))
        .route("/v1/sessions/{id}/respond", post(respond))
        .route("/v1/sessions/{id}/save", post(save))
        .route("/v1/sessions/{id}/log", get(export_log))
        .route("/v1/sessions/{id}/metrics", get(metrics))
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
