//! HTTP/JSON front end for notebook sessions.
//!
//! ```text
//! GET  /nb/{id}/snapshot
//! POST /nb/{id}/command
//! GET  /nb/{id}/events          server-sent StateDelta stream
//! POST /nb/{id}/telemetry
//! GET  /nb/{id}/telemetry       JSON lines
//! GET  /nb/{id}/results?format=csv|json
//! ```

mod session;

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use branchbook_core::persistence::ExportFormat;
use branchbook_core::protocol::{Applied, Command, CommandError, StateDelta};
use branchbook_core::telemetry::Event;
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;

pub use session::{NotebookHandle, SessionError};

/// The set of open notebooks, keyed by id.
#[derive(Clone, Default)]
pub struct AppState {
    notebooks: Arc<RwLock<HashMap<String, NotebookHandle>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, id: impl Into<String>, handle: NotebookHandle) {
        self.notebooks.write().unwrap().insert(id.into(), handle);
    }

    pub fn get(&self, id: &str) -> Option<NotebookHandle> {
        self.notebooks.read().unwrap().get(id).cloned()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/nb/{id}/snapshot", get(snapshot))
        .route("/nb/{id}/command", post(command))
        .route("/nb/{id}/events", get(events))
        .route("/nb/{id}/telemetry", post(post_telemetry).get(get_telemetry))
        .route("/nb/{id}/results", get(results))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn bad_request(kind: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, kind, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.kind, "message": self.message});
        (self.status, Json(body)).into_response()
    }
}

fn notebook(state: &AppState, id: &str) -> Result<NotebookHandle, ApiError> {
    state
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownNotebook", format!("no notebook `{id}`")))
}

fn parse_json(body: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("MalformedJson", e.to_string()))
}

async fn snapshot(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(notebook(&state, &id)?.snapshot()).into_response())
}

async fn command(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let nb = notebook(&state, &id)?;
    let cmd = Command::from_json(&parse_json(&body)?).map_err(|e| match e {
        CommandError::UnknownOp(op) => ApiError::bad_request("UnknownOp", format!("unknown op `{op}`")),
        CommandError::Invalid(m) => ApiError::bad_request("ValidationError", m),
    })?;
    match nb.command(cmd).await {
        Ok(Applied::Accepted { ack, .. }) => Ok(Json(ack).into_response()),
        Ok(Applied::Replay(ack)) => Ok((StatusCode::CONFLICT, Json(ack)).into_response()),
        Err(SessionError::Command(CommandError::UnknownOp(op))) => {
            Err(ApiError::bad_request("UnknownOp", format!("unknown op `{op}`")))
        }
        Err(SessionError::Command(CommandError::Invalid(m))) => Err(ApiError::bad_request("ValidationError", m)),
        Err(SessionError::Closed) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "SessionClosed",
            "the notebook session has stopped",
        )),
    }
}

#[derive(Deserialize)]
struct EventsQuery {
    since: Option<u64>,
}

fn sse_event(d: &StateDelta) -> SseEvent {
    SseEvent::default()
        .id(d.server_seq.to_string())
        .event("delta")
        .data(serde_json::to_string(d).expect("deltas serialize"))
}

/// Replays deltas after `since` (or `Last-Event-ID`), then follows live.
/// A subscriber that falls too far behind is disconnected and can resume.
async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let nb = notebook(&state, &id)?;
    let last_event_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    let since = q.since.or(last_event_id).unwrap_or(0);
    let (backlog, rx) = nb.subscribe(since);
    let last = backlog.last().map_or(since, |d| d.server_seq);
    let live = stream::unfold((rx, last), |(mut rx, last)| async move {
        loop {
            match rx.recv().await {
                Ok(d) if d.server_seq <= last => continue,
                Ok(d) => {
                    let seq = d.server_seq;
                    return Some((d, (rx, seq)));
                }
                Err(broadcast::error::RecvError::Lagged(_)) | Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let stream = stream::iter(backlog).chain(live).map(|d| Ok(sse_event(&d)));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

/// Accepts one event object or an array of them.
async fn post_telemetry(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let nb = notebook(&state, &id)?;
    let events: Vec<Event> = match parse_json(&body)? {
        Value::Array(items) => items
            .into_iter()
            .map(serde_json::from_value)
            .collect::<Result<_, _>>(),
        one => serde_json::from_value(one).map(|e| vec![e]),
    }
    .map_err(|e| ApiError::bad_request("InvalidEvent", e.to_string()))?;
    let accepted = nb
        .record_telemetry(events)
        .map_err(|e| ApiError::bad_request("InvalidEvent", e.to_string()))?;
    Ok(Json(json!({ "accepted": accepted })).into_response())
}

async fn get_telemetry(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = notebook(&state, &id)?.telemetry_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

#[derive(Deserialize)]
struct ResultsQuery {
    format: Option<String>,
}

async fn results(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ResultsQuery>,
) -> Result<Response, ApiError> {
    let nb = notebook(&state, &id)?;
    let format: ExportFormat = q
        .format
        .as_deref()
        .unwrap_or("csv")
        .parse()
        .map_err(|m: String| ApiError::bad_request("ValidationError", m))?;
    let content_type = match format {
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], nb.results(format)).into_response())
}
