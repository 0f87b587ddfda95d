//! Thin async client for the notebook service.

use branchbook_core::persistence::ExportFormat;
use branchbook_core::protocol::{Ack, Command, Replica, ReplicaError, Snapshot, StateDelta};
use branchbook_core::telemetry::Event;
use futures::stream::{self, Stream, StreamExt};
use reqwest::StatusCode;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    /// A structured error response from the service.
    #[error("{status} {kind}: {message}")]
    Api { status: u16, kind: String, message: String },
    #[error("bad event stream: {0}")]
    Stream(String),
    #[error(transparent)]
    Replica(#[from] ReplicaError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandOutcome {
    Accepted(Ack),
    /// The service had already applied this `client_seq`.
    Replayed(Ack),
}

impl CommandOutcome {
    pub fn ack(&self) -> &Ack {
        match self {
            CommandOutcome::Accepted(a) | CommandOutcome::Replayed(a) => a,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
    notebook: String,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str, notebook: &str) -> Self {
        Client {
            http: reqwest::Client::new(),
            base: base.trim_end_matches('/').to_string(),
            notebook: notebook.to_string(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/nb/{}/{}", self.base, self.notebook, path)
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let body: Value = resp.json().await.unwrap_or(Value::Null);
        let field = |k: &str| body.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        Err(ClientError::Api {
            status,
            kind: field("error"),
            message: field("message"),
        })
    }

    pub async fn snapshot(&self) -> Result<Snapshot, ClientError> {
        let resp = self.http.get(self.url("snapshot")).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn command(&self, cmd: &Command) -> Result<CommandOutcome, ClientError> {
        let resp = self.http.post(self.url("command")).json(cmd).send().await?;
        if resp.status() == StatusCode::CONFLICT {
            return Ok(CommandOutcome::Replayed(resp.json().await?));
        }
        Ok(CommandOutcome::Accepted(Self::check(resp).await?.json().await?))
    }

    /// Sends a raw JSON body, for ops this client does not model.
    pub async fn command_json(&self, body: &Value) -> Result<CommandOutcome, ClientError> {
        let resp = self.http.post(self.url("command")).json(body).send().await?;
        if resp.status() == StatusCode::CONFLICT {
            return Ok(CommandOutcome::Replayed(resp.json().await?));
        }
        Ok(CommandOutcome::Accepted(Self::check(resp).await?.json().await?))
    }

    pub async fn telemetry(&self, events: &[Event]) -> Result<usize, ClientError> {
        let resp = self.http.post(self.url("telemetry")).json(events).send().await?;
        let body: Value = Self::check(resp).await?.json().await?;
        Ok(body.get("accepted").and_then(Value::as_u64).unwrap_or(0) as usize)
    }

    pub async fn results(&self, format: ExportFormat) -> Result<Vec<u8>, ClientError> {
        let format = match format {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        };
        let resp = self
            .http
            .get(format!("{}?format={format}", self.url("results")))
            .send()
            .await?;
        Ok(Self::check(resp).await?.bytes().await?.to_vec())
    }

    /// Deltas with `server_seq > since`, in order, until the server closes.
    pub async fn events(&self, since: u64) -> Result<impl Stream<Item = Result<StateDelta, ClientError>>, ClientError> {
        let resp = self
            .http
            .get(format!("{}?since={since}", self.url("events")))
            .send()
            .await?;
        let body = Self::check(resp).await?.bytes_stream();
        Ok(sse_deltas(body))
    }

    /// Snapshot plus a stream that keeps a replica in step with the server.
    /// Each item is the replica after one more delta.
    pub async fn follow(&self) -> Result<impl Stream<Item = Result<Replica, ClientError>>, ClientError> {
        let snap = self.snapshot().await?;
        let replica = Replica::from_snapshot(&snap)?;
        let deltas = self.events(snap.server_seq).await?;
        Ok(deltas.scan(replica, |replica, delta| {
            let next = delta.and_then(|d| {
                replica.apply(&d)?;
                Ok(replica.clone())
            });
            futures::future::ready(Some(next))
        }))
    }
}

/// Parses `text/event-stream` framing into deltas. Only `data` fields
/// matter; ids and event names mirror the payload.
fn sse_deltas<S, B, E>(body: S) -> impl Stream<Item = Result<StateDelta, ClientError>>
where
    S: Stream<Item = Result<B, E>> + Unpin,
    B: AsRef<[u8]>,
    E: Into<ClientError>,
{
    stream::unfold((body, Vec::<u8>::new(), false), |(mut body, mut buf, done)| async move {
        if done {
            return None;
        }
        loop {
            if let Some(end) = find_frame_end(&buf) {
                let frame: Vec<u8> = buf.drain(..end.0 + end.1).take(end.0).collect();
                match parse_frame(&frame) {
                    Some(item) => return Some((item, (body, buf, false))),
                    None => continue,
                }
            }
            match body.next().await {
                Some(Ok(chunk)) => buf.extend_from_slice(chunk.as_ref()),
                Some(Err(e)) => return Some((Err(e.into()), (body, buf, true))),
                None => return None,
            }
        }
    })
}

/// Position and length of the first blank-line separator.
fn find_frame_end(buf: &[u8]) -> Option<(usize, usize)> {
    let lf = buf.windows(2).position(|w| w == b"\n\n").map(|p| (p, 2));
    let crlf = buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| (p, 4));
    match (lf, crlf) {
        (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
        (a, b) => a.or(b),
    }
}

fn parse_frame(frame: &[u8]) -> Option<Result<StateDelta, ClientError>> {
    let text = match std::str::from_utf8(frame) {
        Ok(t) => t,
        Err(e) => return Some(Err(ClientError::Stream(e.to_string()))),
    };
    let mut data = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("data:") {
            data.push(rest.strip_prefix(' ').unwrap_or(rest));
        }
    }
    if data.is_empty() {
        // keep-alive comment or id-only frame
        return None;
    }
    Some(serde_json::from_str(&data.join("\n")).map_err(|e| ClientError::Stream(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn parses_split_frames_and_skips_comments() {
        let d = r#"{"server_seq":1,"change":"layout_changed","window_id":"w1","rect":{"x":0,"y":0,"width":2,"height":3,"column":0}}"#;
        let text = format!(": keep-alive\n\nid: 1\nevent: delta\ndata: {d}\n\n");
        let (a, b) = text.as_bytes().split_at(30);
        let chunks: Vec<Result<Vec<u8>, ClientError>> = vec![Ok(a.to_vec()), Ok(b.to_vec())];
        let out: Vec<_> = sse_deltas(stream::iter(chunks)).collect().await;
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].as_ref().unwrap().server_seq, 1);
    }
}
