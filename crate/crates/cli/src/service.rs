//! HTTP steering service.
//!
//! Each hosted session runs on its own worker thread. Handlers only read the
//! event feed and screenshots, and hand requests and confirmation verdicts to
//! the worker; they never touch the desktop.
//!
//! Routes:
//! - `GET  /sessions`
//! - `GET  /sessions/{id}/events?after=N&wait_ms=M`
//! - `POST /sessions/{id}/requests` with `{"text": ...}`
//! - `POST /sessions/{id}/confirmations` with `{"step_index": N, "approved": bool}`
//! - `GET  /sessions/{id}/screenshots/{step}/{role}.png`

use std::collections::BTreeMap;
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use deskpilot_core::orchestrator::{
    ChannelGate, ConfirmationHandle, EventFeed, ScreenshotStore, SessionEvent, DEFAULT_CONFIRMATION_TIMEOUT,
};
use deskpilot_core::session::SessionState;
use deskpilot_core::Orchestrator;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Longest a single events poll may block.
pub const MAX_WAIT: Duration = Duration::from_secs(30);

/// The service's view of one running session.
pub struct HostedSession {
    pub id: String,
    pub feed: EventFeed,
    pub confirmations: ConfirmationHandle,
    pub screenshots: ScreenshotStore,
    requests: Mutex<Sender<String>>,
}

impl HostedSession {
    /// Moves `orchestrator` onto a worker thread that runs one request at a
    /// time. The orchestrator's gate, feed and screenshot store are replaced
    /// with ones the service can reach.
    pub fn spawn(orchestrator: Orchestrator, screenshots: ScreenshotStore, confirm_timeout: Duration) -> Self {
        let id = orchestrator.session.id.clone();
        let feed = EventFeed::new();
        let confirmations = ConfirmationHandle::new();
        let gate = ChannelGate::new(confirmations.clone()).with_timeout(confirm_timeout);
        let mut orchestrator = orchestrator
            .with_gate(Box::new(gate))
            .with_feed(feed.clone())
            .with_screenshots(screenshots.clone());
        let (tx, rx) = mpsc::channel::<String>();
        let worker_feed = feed.clone();
        std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || {
                for text in rx {
                    let outcome = orchestrator.run_request(&text);
                    tracing::info!(?outcome, "request finished");
                    worker_feed.finish();
                }
            })
            .expect("spawn session worker");
        HostedSession { id, feed, confirmations, screenshots, requests: Mutex::new(tx) }
    }

    pub fn spawn_default(orchestrator: Orchestrator) -> Self {
        Self::spawn(orchestrator, ScreenshotStore::in_memory(), DEFAULT_CONFIRMATION_TIMEOUT)
    }

    fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            state: self.feed.state(),
            busy: self.feed.is_busy(),
            events: self.feed.len() as u64,
            pending_confirmation: self.confirmations.pending(),
        }
    }
}

#[derive(Default)]
pub struct ServiceState {
    sessions: BTreeMap<String, Arc<HostedSession>>,
}

impl ServiceState {
    pub fn new(sessions: impl IntoIterator<Item = HostedSession>) -> Self {
        ServiceState { sessions: sessions.into_iter().map(|s| (s.id.clone(), Arc::new(s))).collect() }
    }

    pub fn session(&self, id: &str) -> Option<Arc<HostedSession>> {
        self.sessions.get(id).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub state: SessionState,
    pub busy: bool,
    pub events: u64,
    pub pending_confirmation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPage {
    pub session_id: String,
    pub state: SessionState,
    pub busy: bool,
    pub events: Vec<SessionEvent>,
    /// Pass back as `after` to continue without gaps or repeats.
    pub cursor: u64,
}

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    #[serde(default)]
    pub after: u64,
    #[serde(default)]
    pub wait_ms: u64,
}

#[derive(Debug, Deserialize)]
pub struct RequestBody {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct ConfirmationBody {
    pub step_index: u64,
    pub approved: bool,
}

fn error(status: StatusCode, code: &str, detail: impl Into<String>) -> Response {
    (status, Json(json!({ "error": code, "detail": detail.into() }))).into_response()
}

fn unknown_session(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, "UNKNOWN_SESSION", id)
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/sessions", get(list_sessions))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/requests", post(submit_request))
        .route("/sessions/{id}/confirmations", post(resolve_confirmation))
        .route("/sessions/{id}/screenshots/{step}/{file}", get(screenshot))
        .with_state(state)
}

async fn list_sessions(State(state): State<Arc<ServiceState>>) -> Json<Vec<SessionSummary>> {
    Json(state.sessions.values().map(|s| s.summary()).collect())
}

async fn events(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Response {
    let Some(session) = state.session(&id) else { return unknown_session(&id) };
    let mut events = session.feed.since(q.after);
    if events.is_empty() && q.wait_ms > 0 {
        let wait = Duration::from_millis(q.wait_ms).min(MAX_WAIT);
        let feed = session.feed.clone();
        let after = q.after;
        events = tokio::task::spawn_blocking(move || feed.wait_since(after, wait)).await.unwrap_or_default();
    }
    let cursor = events.last().map(|e| e.sequence).unwrap_or(q.after);
    Json(EventPage { session_id: id, state: session.feed.state(), busy: session.feed.is_busy(), events, cursor })
        .into_response()
}

async fn submit_request(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Json(body): Json<RequestBody>,
) -> Response {
    let Some(session) = state.session(&id) else { return unknown_session(&id) };
    if body.text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "EMPTY_REQUEST", "request text is empty");
    }
    if session.feed.state() == SessionState::Done {
        return error(StatusCode::CONFLICT, "SESSION_CLOSED", "session has ended");
    }
    if !session.feed.try_begin() {
        return error(StatusCode::CONFLICT, "SESSION_BUSY", "a request is already running");
    }
    let cursor = session.feed.len() as u64;
    let sent = session.requests.lock().unwrap_or_else(|p| p.into_inner()).send(body.text);
    if sent.is_err() {
        session.feed.finish();
        return error(StatusCode::CONFLICT, "SESSION_CLOSED", "session worker has stopped");
    }
    (StatusCode::ACCEPTED, Json(json!({ "accepted": true, "cursor": cursor }))).into_response()
}

async fn resolve_confirmation(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Json(body): Json<ConfirmationBody>,
) -> Response {
    let Some(session) = state.session(&id) else { return unknown_session(&id) };
    match session.confirmations.resolve(body.step_index, body.approved) {
        Ok(()) => Json(json!({ "step_index": body.step_index, "approved": body.approved })).into_response(),
        Err(e) => error(StatusCode::CONFLICT, e.code(), e.to_string()),
    }
}

async fn screenshot(
    State(state): State<Arc<ServiceState>>,
    Path((id, step, file)): Path<(String, u64, String)>,
) -> Response {
    let Some(session) = state.session(&id) else { return unknown_session(&id) };
    let Some(role) = file.strip_suffix(".png") else {
        return error(StatusCode::NOT_FOUND, "UNKNOWN_SCREENSHOT", file);
    };
    match session.screenshots.get(step, role) {
        Some(png) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        None => error(StatusCode::NOT_FOUND, "UNKNOWN_SCREENSHOT", format!("step {step} role {role}")),
    }
}

/// Serves `router` on `addr` until the process exits.
pub fn serve_blocking(addr: std::net::SocketAddr, state: Arc<ServiceState>) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(addr = %listener.local_addr()?, "serving");
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await
    })
}
