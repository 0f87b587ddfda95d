//! Interaction log (JSON lines) and per-task metrics.

use std::ops::Add;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RunPressed,
    Scroll,
    HeadRotation,
    Walk,
    BranchCreated,
    CellDeleted,
    CellRelocated,
    CellEdited,
    TaskStart,
    TaskEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_ms: u64,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: Map<String, Json>,
}

impl Event {
    pub fn new(t_ms: u64, kind: EventKind) -> Self {
        Event {
            t_ms,
            kind,
            payload: Map::new(),
        }
    }

    pub fn scroll(t_ms: u64, ticks: i64) -> Self {
        Self::new(t_ms, EventKind::Scroll).with("ticks", ticks.into())
    }

    pub fn head_rotation(t_ms: u64, delta_deg: f64) -> Self {
        Self::new(t_ms, EventKind::HeadRotation).with("delta_deg", delta_deg.into())
    }

    pub fn walk(t_ms: u64, delta_m: f64) -> Self {
        Self::new(t_ms, EventKind::Walk).with("delta_m", delta_m.into())
    }

    pub fn with(mut self, key: &str, value: Json) -> Self {
        self.payload.insert(key.to_string(), value);
        self
    }

    /// Checks the payload fields the metrics rely on.
    pub fn check_payload(&self) -> Result<(), String> {
        let need = |key: &str, ok: fn(&Json) -> bool| match self.payload.get(key) {
            Some(v) if ok(v) => Ok(()),
            _ => Err(format!("{:?} event needs numeric `{key}`", self.kind)),
        };
        match self.kind {
            EventKind::Scroll => need("ticks", |v| v.is_i64()),
            EventKind::HeadRotation => need("delta_deg", |v| v.is_number()),
            EventKind::Walk => need("delta_m", |v| v.is_number()),
            _ => Ok(()),
        }
    }

    fn number(&self, key: &str) -> f64 {
        self.payload.get(key).and_then(Json::as_f64).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("event at t={t_ms} ms is earlier than the previous event at t={last_ms} ms")]
    OutOfOrderTimestamp { t_ms: u64, last_ms: u64 },
    #[error("malformed log line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("no task with index {0}")]
    UnknownTask(usize),
}

/// Append-only event log with non-decreasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn append(&mut self, event: Event) -> Result<(), TelemetryError> {
        if let Some(last) = self.events.last() {
            if event.t_ms < last.t_ms {
                return Err(TelemetryError::OutOfOrderTimestamp {
                    t_ms: event.t_ms,
                    last_ms: last.t_ms,
                });
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.events {
            out.extend(event_line(e));
        }
        out
    }
}

/// One JSON line, newline-terminated.
pub fn event_line(e: &Event) -> Vec<u8> {
    let mut line = serde_json::to_vec(e).expect("events serialize");
    line.push(b'\n');
    line
}

/// Parses a JSON-lines log. Blank lines (including a trailing newline) are ignored.
pub fn load_log(bytes: &[u8]) -> Result<Vec<Event>, TelemetryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| TelemetryError::MalformedLine {
        line: 1,
        message: e.to_string(),
    })?;
    let mut log = EventLog::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| TelemetryError::MalformedLine {
            line: i + 1,
            message,
        };
        let event: Event = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        event.check_payload().map_err(malformed)?;
        log.append(event)?;
    }
    Ok(log.events)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub completion_time_ms: u64,
    pub run_count: u64,
    pub scroll_ticks: u64,
    pub rotation_deg: f64,
    pub walk_m: f64,
    pub text_edit_count: u64,
}

impl Add for MetricsReport {
    type Output = MetricsReport;

    fn add(self, o: MetricsReport) -> MetricsReport {
        MetricsReport {
            completion_time_ms: self.completion_time_ms + o.completion_time_ms,
            run_count: self.run_count + o.run_count,
            scroll_ticks: self.scroll_ticks + o.scroll_ticks,
            rotation_deg: self.rotation_deg + o.rotation_deg,
            walk_m: self.walk_m + o.walk_m,
            text_edit_count: self.text_edit_count + o.text_edit_count,
        }
    }
}

/// Time windows `[start, end)` of each completed task, in log order.
pub fn task_windows(events: &[Event]) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut open = None;
    for e in events {
        match e.kind {
            EventKind::TaskStart => open = Some(e.t_ms),
            EventKind::TaskEnd => {
                if let Some(start) = open.take() {
                    out.push((start, e.t_ms));
                }
            }
            _ => {}
        }
    }
    out
}

/// Aggregates the events of the `task_index`-th task (0-based). Distances
/// are summed as absolute values.
pub fn compute_metrics(events: &[Event], task_index: usize) -> Result<MetricsReport, TelemetryError> {
    let (start, end) = *task_windows(events)
        .get(task_index)
        .ok_or(TelemetryError::UnknownTask(task_index))?;
    let mut r = MetricsReport {
        completion_time_ms: end - start,
        ..MetricsReport::default()
    };
    for e in events.iter().filter(|e| e.t_ms >= start && e.t_ms < end) {
        match e.kind {
            EventKind::RunPressed => r.run_count += 1,
            EventKind::Scroll => r.scroll_ticks += e.number("ticks").abs() as u64,
            EventKind::HeadRotation => r.rotation_deg += e.number("delta_deg").abs(),
            EventKind::Walk => r.walk_m += e.number("delta_m").abs(),
            EventKind::CellEdited => r.text_edit_count += 1,
            _ => {}
        }
    }
    Ok(r)
}
