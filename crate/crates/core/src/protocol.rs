//! Wire types for the notebook service and the state machine behind it.
//!
//! A [`Session`] owns one notebook and its execution state. Commands are
//! applied one at a time; every observable change is emitted as a
//! [`StateDelta`] with a strictly increasing `server_seq`. A [`Replica`]
//! built from a snapshot and fed the later deltas reproduces the session's
//! snapshot exactly.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::engine::{Combination, ExecObserver, ExecState, ExecStatus, ExecSummary, OutputEntry, Results};
use crate::layout::{desktop_layout, DesktopRect, PixelConfig};
use crate::notebook::Notebook;
use crate::persistence::{self, FormatError};

pub const KNOWN_OPS: &[&str] = &[
    "edit_cell",
    "branch",
    "extract",
    "relocate",
    "delete_cells",
    "delete_window",
    "run_from",
    "execute_all",
    "move_window",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    EditCell { cell_id: String, source: String },
    Branch { window_id: String },
    Extract { window_id: String, cell_ids: Vec<String> },
    Relocate { cell_id: String, target_window_id: String, target_index: usize },
    DeleteCells { cell_ids: Vec<String> },
    DeleteWindow { window_id: String },
    RunFrom { cell_id: String },
    ExecuteAll,
    /// Presentation only: pins a window's desktop position.
    MoveWindow { window_id: String, x: i64, y: i64 },
}

impl Op {
    pub fn is_execution(&self) -> bool {
        matches!(self, Op::RunFrom { .. } | Op::ExecuteAll)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub client_seq: u64,
    /// Distinguishes clients for replay detection; optional.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub client_id: String,
    #[serde(flatten)]
    pub op: Op,
}

impl Command {
    pub fn new(client_seq: u64, op: Op) -> Self {
        Command {
            client_seq,
            client_id: String::new(),
            op,
        }
    }

    /// Parses a command body, telling unknown ops apart from malformed ones.
    pub fn from_json(v: &Json) -> Result<Command, CommandError> {
        match v.get("op").and_then(Json::as_str) {
            Some(op) if KNOWN_OPS.contains(&op) => {}
            Some(op) => return Err(CommandError::UnknownOp(op.to_string())),
            None => return Err(CommandError::Invalid("missing `op`".into())),
        }
        serde_json::from_value(v.clone()).map_err(|e| CommandError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub server_seq: u64,
    pub client_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_window_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("unknown op `{0}`")]
    UnknownOp(String),
    #[error("invalid command: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum Change {
    /// Full notebook document in file format.
    NotebookChanged { notebook: Json },
    StatusChanged { cell_id: String, combination: String, status: ExecStatus },
    OutputAdded { window_id: String, entry: OutputEntry },
    LayoutChanged { window_id: String, rect: DesktopRect },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDelta {
    pub server_seq: u64,
    #[serde(flatten)]
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub server_seq: u64,
    pub notebook: Json,
    pub exec_state_summary: ExecSummary,
    pub layout: BTreeMap<String, DesktopRect>,
}

/// Result of applying a command.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    /// Applied now. For execution ops the caller must follow up with [`Session::execute`].
    Accepted { ack: Ack, deltas: Vec<StateDelta> },
    /// The command was seen before; nothing changed.
    Replay(Ack),
}

/// One notebook with its execution state, presentation layout and delta sequence.
#[derive(Debug, Clone)]
pub struct Session {
    notebook: Notebook,
    state: ExecState,
    server_seq: u64,
    pixels: PixelConfig,
    pinned: BTreeMap<String, (i64, i64)>,
    acks: HashMap<(String, u64), Ack>,
}

struct DeltaSink<'a> {
    seq: &'a mut u64,
    emit: &'a mut dyn FnMut(StateDelta),
}

impl DeltaSink<'_> {
    fn push(&mut self, change: Change) {
        *self.seq += 1;
        (self.emit)(StateDelta {
            server_seq: *self.seq,
            change,
        });
    }
}

impl ExecObserver for DeltaSink<'_> {
    fn status(&mut self, cell_id: &str, combination: &Combination, status: ExecStatus) {
        self.push(Change::StatusChanged {
            cell_id: cell_id.to_string(),
            combination: combination.label(),
            status,
        });
    }

    fn output(&mut self, window_id: &str, entry: &OutputEntry) {
        self.push(Change::OutputAdded {
            window_id: window_id.to_string(),
            entry: entry.clone(),
        });
    }
}

impl Session {
    pub fn new(notebook: Notebook) -> Self {
        Session {
            notebook,
            state: ExecState::new(),
            server_seq: 0,
            pixels: PixelConfig::default(),
            pinned: BTreeMap::new(),
            acks: HashMap::new(),
        }
    }

    pub fn notebook(&self) -> &Notebook {
        &self.notebook
    }

    pub fn state(&self) -> &ExecState {
        &self.state
    }

    pub fn server_seq(&self) -> u64 {
        self.server_seq
    }

    pub fn layout(&self) -> BTreeMap<String, DesktopRect> {
        let mut rects = desktop_layout(&self.notebook, &self.pixels);
        for (id, (x, y)) in &self.pinned {
            if let Some(r) = rects.get_mut(id) {
                r.x = *x;
                r.y = *y;
            }
        }
        rects
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            server_seq: self.server_seq,
            notebook: persistence::to_json(&self.notebook),
            exec_state_summary: self.state.results.summary(&self.notebook),
            layout: self.layout(),
        }
    }

    /// Validates and applies a command. Execution ops only get acknowledged
    /// here; their work happens in [`Session::execute`].
    pub fn apply(&mut self, cmd: &Command) -> Result<Applied, CommandError> {
        let key = (cmd.client_id.clone(), cmd.client_seq);
        if let Some(ack) = self.acks.get(&key) {
            return Ok(Applied::Replay(ack.clone()));
        }
        let invalid = |e: &dyn std::fmt::Display| CommandError::Invalid(e.to_string());
        let nb = &self.notebook;
        let mut new_window_id = None;
        let edited = match &cmd.op {
            Op::EditCell { cell_id, source } => Some(nb.edit_cell(cell_id, source).map_err(|e| invalid(&e))?),
            Op::Branch { window_id } => {
                let (n, id) = nb.branch(window_id).map_err(|e| invalid(&e))?;
                new_window_id = Some(id);
                Some(n)
            }
            Op::Extract { window_id, cell_ids } => {
                let ids: Vec<&str> = cell_ids.iter().map(String::as_str).collect();
                let (n, id) = nb.extract(window_id, &ids).map_err(|e| invalid(&e))?;
                new_window_id = Some(id);
                Some(n)
            }
            Op::Relocate { cell_id, target_window_id, target_index } => Some(
                nb.relocate(cell_id, target_window_id, *target_index)
                    .map_err(|e| invalid(&e))?,
            ),
            Op::DeleteCells { cell_ids } => {
                let ids: Vec<&str> = cell_ids.iter().map(String::as_str).collect();
                Some(nb.delete_cells(&ids).map_err(|e| invalid(&e))?)
            }
            Op::DeleteWindow { window_id } => Some(nb.delete_window(window_id).map_err(|e| invalid(&e))?),
            Op::RunFrom { cell_id } => {
                if nb.locate_cell(cell_id).is_none() {
                    return Err(CommandError::Invalid(format!("unknown cell `{cell_id}`")));
                }
                None
            }
            Op::ExecuteAll => None,
            Op::MoveWindow { window_id, .. } => {
                if nb.locate_window(window_id).is_none() {
                    return Err(CommandError::Invalid(format!("unknown window `{window_id}`")));
                }
                None
            }
        };

        let mut deltas = Vec::new();
        let before = self.layout();
        {
            let mut emit = |d: StateDelta| deltas.push(d);
            let mut sink = DeltaSink {
                seq: &mut self.server_seq,
                emit: &mut emit,
            };
            if let Some(new_nb) = edited {
                let old = std::mem::replace(&mut self.notebook, new_nb);
                self.pinned.retain(|id, _| self.notebook.locate_window(id).is_some());
                self.state.restructure(&old, &self.notebook);
                sink.push(Change::NotebookChanged {
                    notebook: persistence::to_json(&self.notebook),
                });
                if let Op::EditCell { cell_id, .. } = &cmd.op {
                    self.state
                        .invalidate(&self.notebook, cell_id, &mut sink)
                        .map_err(|e| invalid(&e))?;
                }
            }
            if let Op::MoveWindow { window_id, x, y } = &cmd.op {
                self.pinned.insert(window_id.clone(), (*x, *y));
            }
            let after = {
                let mut rects = desktop_layout(&self.notebook, &self.pixels);
                for (id, (x, y)) in &self.pinned {
                    if let Some(r) = rects.get_mut(id) {
                        r.x = *x;
                        r.y = *y;
                    }
                }
                rects
            };
            for (id, rect) in after {
                if before.get(&id) != Some(&rect) {
                    sink.push(Change::LayoutChanged { window_id: id, rect });
                }
            }
        }
        let ack = Ack {
            server_seq: self.server_seq,
            client_seq: cmd.client_seq,
            new_window_id,
        };
        self.acks.insert(key, ack.clone());
        Ok(Applied::Accepted { ack, deltas })
    }

    /// Runs an accepted execution op, streaming status and output deltas
    /// in canonical order. Other ops are ignored.
    pub fn execute(&mut self, op: &Op, emit: &mut dyn FnMut(StateDelta)) {
        let mut sink = DeltaSink {
            seq: &mut self.server_seq,
            emit,
        };
        match op {
            Op::ExecuteAll => self.state.execute_all_observed(&self.notebook, &mut sink),
            Op::RunFrom { cell_id } => {
                // validated in apply; a structural edit in between cannot
                // happen because commands are serialized
                let _ = self.state.run_from(&self.notebook, cell_id, &mut sink);
            }
            _ => {}
        }
    }

    /// Applies a command and, for execution ops, runs it; returns all deltas.
    pub fn apply_and_run(&mut self, cmd: &Command) -> Result<(Applied, Vec<StateDelta>), CommandError> {
        let applied = self.apply(cmd)?;
        let mut deltas = match &applied {
            Applied::Accepted { deltas, .. } => deltas.clone(),
            Applied::Replay(_) => return Ok((applied, Vec::new())),
        };
        if cmd.op.is_execution() {
            self.execute(&cmd.op, &mut |d| deltas.push(d));
        }
        Ok((applied, deltas))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplicaError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("delta {got} does not follow {expected}")]
    Gap { expected: u64, got: u64 },
}

/// Client-side mirror of a session, driven by snapshot + deltas.
#[derive(Debug, Clone)]
pub struct Replica {
    pub server_seq: u64,
    pub notebook: Notebook,
    pub results: Results,
    pub layout: BTreeMap<String, DesktopRect>,
}

impl Replica {
    pub fn from_snapshot(snap: &Snapshot) -> Result<Replica, ReplicaError> {
        let notebook = persistence::from_json(&snap.notebook)?;
        let mut results = Results::default();
        for w in &snap.exec_state_summary.windows {
            for e in &w.entries {
                results.put_output(&w.window_id, e.clone());
            }
        }
        for row in &snap.exec_state_summary.statuses {
            if row.status != ExecStatus::Idle {
                results.set_status(&row.cell_id, &row.combination, row.status);
            }
        }
        Ok(Replica {
            server_seq: snap.server_seq,
            notebook,
            results,
            layout: snap.layout.clone(),
        })
    }

    /// Applies one delta. Deltas at or below the current seq are ignored.
    pub fn apply(&mut self, delta: &StateDelta) -> Result<(), ReplicaError> {
        if delta.server_seq <= self.server_seq {
            return Ok(());
        }
        if delta.server_seq != self.server_seq + 1 {
            return Err(ReplicaError::Gap {
                expected: self.server_seq + 1,
                got: delta.server_seq,
            });
        }
        match &delta.change {
            Change::NotebookChanged { notebook } => {
                let new = persistence::from_json(notebook)?;
                self.results.on_notebook_changed(&self.notebook, &new);
                self.layout.retain(|id, _| new.locate_window(id).is_some());
                self.notebook = new;
            }
            Change::StatusChanged { cell_id, combination, status } => {
                self.results.set_status(cell_id, combination, *status);
            }
            Change::OutputAdded { window_id, entry } => {
                self.results.put_output(window_id, entry.clone());
            }
            Change::LayoutChanged { window_id, rect } => {
                self.layout.insert(window_id.clone(), *rect);
            }
        }
        self.server_seq = delta.server_seq;
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            server_seq: self.server_seq,
            notebook: persistence::to_json(&self.notebook),
            exec_state_summary: self.results.summary(&self.notebook),
            layout: self.layout.clone(),
        }
    }
}
