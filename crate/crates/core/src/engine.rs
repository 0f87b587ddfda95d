//! Branch-aware execution.
//!
//! Every window runs once per upstream combination: one choice of
//! alternative for each branch group before the window's stage. Lineages
//! fork their environment where they split, so siblings never share state,
//! and an error ends its lineage while leaving siblings untouched.
//!
//! The state keeps an environment snapshot before every cell (and after the
//! last one) so `run_from` can restart mid-window without re-running
//! upstream work.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::minilang::{eval_cell, parse, CellResult, Environment, EvalError, Program};
use crate::notebook::{CellPos, Notebook, Shape};

/// One alternative index per branch-group stage in a prefix of stages.
/// Ordering matches enumeration order for combinations over the same stages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Combination(BTreeMap<usize, usize>);

impl Combination {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, stage: usize) -> Option<usize> {
        self.0.get(&stage).copied()
    }

    pub fn with(&self, stage: usize, alt: usize) -> Combination {
        let mut c = self.clone();
        c.0.insert(stage, alt);
        c
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().map(|(s, a)| (*s, *a))
    }

    /// The part of this combination covering stages before `stage`.
    pub fn prefix(&self, stage: usize) -> Combination {
        Combination(self.0.range(..stage).map(|(s, a)| (*s, *a)).collect())
    }

    /// Canonical label, e.g. `s3=1;s5=0`; empty for the branch-free prefix.
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|(s, a)| format!("s{s}={a}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse(label: &str) -> Result<Combination, String> {
        let mut map = BTreeMap::new();
        if label.is_empty() {
            return Ok(Combination(map));
        }
        for part in label.split(';') {
            let bad = || format!("malformed combination label `{label}`");
            let (s, a) = part.strip_prefix('s').and_then(|p| p.split_once('=')).ok_or_else(bad)?;
            let s: usize = s.parse().map_err(|_| bad())?;
            let a: usize = a.parse().map_err(|_| bad())?;
            if map.insert(s, a).is_some() {
                return Err(bad());
            }
        }
        Ok(Combination(map))
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for Combination {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Combination {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Combination::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Cartesian product over the branch groups before `stage_index`, earliest
/// stage varying slowest. A branch-free prefix yields one empty combination.
pub fn upstream_combinations(nb: &Notebook, stage_index: usize) -> Vec<Combination> {
    let end = stage_index.min(nb.stages.len());
    let mut combos = vec![Combination::empty()];
    for (s, stage) in nb.stages[..end].iter().enumerate() {
        if !stage.is_group() {
            continue;
        }
        combos = combos
            .iter()
            .flat_map(|c| (0..stage.group_size()).map(move |a| c.with(s, a)))
            .collect();
    }
    combos
}

/// Every combination over all branch groups of the notebook.
pub fn full_combinations(nb: &Notebook) -> Vec<Combination> {
    upstream_combinations(nb, nb.stages.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    #[default]
    Idle,
    Stale,
    Queued,
    Running,
    Ok,
    Error,
    Skipped,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Idle => "idle",
            ExecStatus::Stale => "stale",
            ExecStatus::Queued => "queued",
            ExecStatus::Running => "running",
            ExecStatus::Ok => "ok",
            ExecStatus::Error => "error",
            ExecStatus::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputItem {
    pub cell_id: String,
    pub text: String,
}

/// Outputs of one window under one upstream combination.
///
/// `skipped` means the window never ran because its lineage failed
/// upstream; `error` then holds that upstream error and `items` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub combination: Combination,
    pub items: Vec<OutputItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<EvalError>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

/// Receives execution progress in canonical order.
pub trait ExecObserver {
    fn status(&mut self, _cell_id: &str, _combination: &Combination, _status: ExecStatus) {}
    fn output(&mut self, _window_id: &str, _entry: &OutputEntry) {}
    /// Called once per actual cell evaluation.
    fn evaluated(&mut self, _cell_id: &str, _combination: &Combination) {}
}

impl ExecObserver for () {}

/// Counts evaluations per cell.
#[derive(Debug, Default)]
pub struct EvalCounter {
    pub counts: BTreeMap<String, u64>,
}

impl ExecObserver for EvalCounter {
    fn evaluated(&mut self, cell_id: &str, _combination: &Combination) {
        *self.counts.entry(cell_id.to_string()).or_default() += 1;
    }
}

/// Outputs and statuses: the observable part of an execution state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Results {
    /// Per window, entries ordered by combination.
    pub outputs: BTreeMap<String, Vec<OutputEntry>>,
    /// Per cell, status by combination label.
    pub status: BTreeMap<String, BTreeMap<String, ExecStatus>>,
}

impl Results {
    pub fn outputs(&self, window_id: &str) -> &[OutputEntry] {
        self.outputs.get(window_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn status_of(&self, cell_id: &str, combination: &str) -> ExecStatus {
        self.status
            .get(cell_id)
            .and_then(|m| m.get(combination))
            .copied()
            .unwrap_or_default()
    }

    pub fn set_status(&mut self, cell_id: &str, combination: &str, status: ExecStatus) {
        self.status
            .entry(cell_id.to_string())
            .or_default()
            .insert(combination.to_string(), status);
    }

    pub fn entry(&self, window_id: &str, combination: &Combination) -> Option<&OutputEntry> {
        let entries = self.outputs.get(window_id)?;
        entries
            .binary_search_by(|e| e.combination.cmp(combination))
            .ok()
            .map(|i| &entries[i])
    }

    /// Inserts or replaces the entry for `entry.combination`.
    pub fn put_output(&mut self, window_id: &str, entry: OutputEntry) {
        let entries = self.outputs.entry(window_id.to_string()).or_default();
        match entries.binary_search_by(|e| e.combination.cmp(&entry.combination)) {
            Ok(i) => entries[i] = entry,
            Err(i) => entries.insert(i, entry),
        }
    }

    /// Drops outputs and statuses whose window, cell or combination no
    /// longer exists in `nb`.
    pub fn prune_to(&mut self, nb: &Notebook) {
        let mut windows = HashMap::new();
        let mut cells = HashMap::new();
        for (pos, w) in nb.windows() {
            windows.insert(w.id.as_str(), pos.stage);
            for c in &w.cells {
                cells.insert(c.id.as_str(), pos.stage);
            }
        }
        let mut upstream: HashMap<usize, HashSet<String>> = HashMap::new();
        let mut labels_for = |stage: usize| -> HashSet<String> {
            upstream
                .entry(stage)
                .or_insert_with(|| {
                    upstream_combinations(nb, stage)
                        .iter()
                        .map(Combination::label)
                        .collect()
                })
                .clone()
        };
        self.outputs.retain(|w, _| windows.contains_key(w.as_str()));
        for (w, entries) in self.outputs.iter_mut() {
            let live = labels_for(windows[w.as_str()]);
            entries.retain(|e| live.contains(&e.combination.label()));
        }
        self.status.retain(|c, _| cells.contains_key(c.as_str()));
        for (c, by_combo) in self.status.iter_mut() {
            let live = labels_for(cells[c.as_str()]);
            by_combo.retain(|label, _| live.contains(label));
        }
    }

    pub fn mark_all_stale(&mut self) {
        for by_combo in self.status.values_mut() {
            for st in by_combo.values_mut() {
                if *st != ExecStatus::Idle {
                    *st = ExecStatus::Stale;
                }
            }
        }
    }

    /// Applies the bookkeeping for a notebook replacement: if the shape
    /// changed, everything left over is pruned and marked stale.
    pub fn on_notebook_changed(&mut self, old: &Notebook, new: &Notebook) {
        if old.shape() != new.shape() {
            self.prune_to(new);
            self.mark_all_stale();
        }
    }

    /// Point-in-time view over the current notebook; missing statuses read idle.
    pub fn summary(&self, nb: &Notebook) -> ExecSummary {
        let mut windows = Vec::new();
        let mut statuses = Vec::new();
        for (s, stage) in nb.stages.iter().enumerate() {
            let combos = upstream_combinations(nb, s);
            for (a, w) in stage.alternatives.iter().enumerate() {
                let entries = combos
                    .iter()
                    .filter_map(|c| self.entry(&w.id, c).cloned())
                    .collect();
                windows.push(WindowSummary {
                    window_id: w.id.clone(),
                    stage_index: s,
                    alt_index: a,
                    entries,
                });
                for cell in &w.cells {
                    for c in &combos {
                        let label = c.label();
                        statuses.push(StatusRow {
                            cell_id: cell.id.clone(),
                            status: self.status_of(&cell.id, &label),
                            combination: label,
                        });
                    }
                }
            }
        }
        ExecSummary { windows, statuses }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window_id: String,
    pub stage_index: usize,
    pub alt_index: usize,
    pub entries: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRow {
    pub cell_id: String,
    pub combination: String,
    pub status: ExecStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecSummary {
    pub windows: Vec<WindowSummary>,
    pub statuses: Vec<StatusRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown cell `{0}`")]
    UnknownCell(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CheckpointKey {
    combination: String,
    stage: usize,
    alt: usize,
    cell_index: usize,
}

impl CheckpointKey {
    fn new(combination: &str, stage: usize, alt: usize, cell_index: usize) -> Self {
        CheckpointKey {
            combination: combination.to_string(),
            stage,
            alt,
            cell_index,
        }
    }
}

#[derive(Debug, Clone)]
enum Lineage {
    Live(Environment),
    Dead(EvalError),
}

/// Where a recomputed window starts and what it starts from.
enum NodeInput {
    /// Upstream was recomputed in this run; start at cell 0 with its result.
    Fresh,
    /// Restart at this cell index from the stored checkpoint.
    Checkpoint(usize),
    /// The lineage died upstream and nothing upstream changed.
    StillDead(EvalError),
}

/// Outputs, statuses and environment checkpoints for one notebook.
#[derive(Debug, Clone, Default)]
pub struct ExecState {
    pub results: Results,
    checkpoints: HashMap<CheckpointKey, Environment>,
    shape: Option<Shape>,
}

impl ExecState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn outputs(&self, window_id: &str) -> &[OutputEntry] {
        self.results.outputs(window_id)
    }

    pub fn status_of(&self, cell_id: &str, combination: &str) -> ExecStatus {
        self.results.status_of(cell_id, combination)
    }

    pub fn checkpoint_count(&self) -> usize {
        self.checkpoints.len()
    }

    /// Runs every window under every upstream combination.
    pub fn execute_all(nb: &Notebook) -> ExecState {
        let mut state = ExecState::new();
        state.execute_all_observed(nb, &mut ());
        state
    }

    pub fn execute_all_observed(&mut self, nb: &Notebook, obs: &mut dyn ExecObserver) {
        self.results = Results::default();
        self.checkpoints.clear();
        let plan = Plan::full(nb);
        self.run(nb, &plan, obs);
    }

    /// Re-executes the cell, the rest of its window and everything
    /// downstream in the lineages through that window. Stale cells upstream
    /// of the target are recomputed first. Falls back to a full run when the
    /// notebook's shape changed or a needed checkpoint is missing.
    pub fn run_from(
        &mut self,
        nb: &Notebook,
        cell_id: &str,
        obs: &mut dyn ExecObserver,
    ) -> Result<(), EngineError> {
        let target = nb
            .locate_cell(cell_id)
            .ok_or_else(|| EngineError::UnknownCell(cell_id.to_string()))?;
        if self.shape.as_ref() != Some(&nb.shape()) {
            self.execute_all_observed(nb, obs);
            return Ok(());
        }
        match Plan::incremental(nb, self, target) {
            Some(plan) => self.run(nb, &plan, obs),
            None => self.execute_all_observed(nb, obs),
        }
        Ok(())
    }

    /// Marks the edited cell, the rest of its window and every later stage in
    /// the lineages through its window as stale, and drops the checkpoints
    /// that the edit made invalid. Outputs are kept.
    pub fn invalidate(
        &mut self,
        nb: &Notebook,
        edited_cell_id: &str,
        obs: &mut dyn ExecObserver,
    ) -> Result<(), EngineError> {
        let pos = nb
            .locate_cell(edited_cell_id)
            .ok_or_else(|| EngineError::UnknownCell(edited_cell_id.to_string()))?;
        let group = nb.stages[pos.stage].is_group();
        let window = nb.window(pos.window());
        for c in upstream_combinations(nb, pos.stage) {
            let label = c.label();
            for cell in &window.cells[pos.index..] {
                self.mark(&cell.id, &c, &label, ExecStatus::Stale, obs);
            }
            self.checkpoints.retain(|k, _| {
                !(k.combination == label
                    && k.stage == pos.stage
                    && k.alt == pos.alt
                    && k.cell_index > pos.index)
            });
        }
        for t in pos.stage + 1..nb.stages.len() {
            for d in upstream_combinations(nb, t) {
                if group && d.get(pos.stage) != Some(pos.alt) {
                    continue;
                }
                let label = d.label();
                for w in &nb.stages[t].alternatives {
                    for cell in &w.cells {
                        self.mark(&cell.id, &d, &label, ExecStatus::Stale, obs);
                    }
                }
                self.checkpoints
                    .retain(|k, _| !(k.combination == label && k.stage == t));
            }
        }
        Ok(())
    }

    /// Structural change: prune results to the new notebook and mark them stale.
    /// The next `run_from` will fall back to a full run.
    pub fn restructure(&mut self, old: &Notebook, new: &Notebook) {
        self.results.on_notebook_changed(old, new);
    }

    fn mark(
        &mut self,
        cell_id: &str,
        c: &Combination,
        label: &str,
        status: ExecStatus,
        obs: &mut dyn ExecObserver,
    ) {
        self.results.set_status(cell_id, label, status);
        obs.status(cell_id, c, status);
    }

    fn run(&mut self, nb: &Notebook, plan: &Plan, obs: &mut dyn ExecObserver) {
        let mut programs: HashMap<&str, Result<Program, EvalError>> = HashMap::new();
        let mut incoming: HashMap<String, Lineage> = HashMap::new();
        incoming.insert(String::new(), Lineage::Live(Environment::new()));
        for (s, stage) in nb.stages.iter().enumerate() {
            let mut outgoing = HashMap::new();
            for c in upstream_combinations(nb, s) {
                let label = c.label();
                for (a, window) in stage.alternatives.iter().enumerate() {
                    let Some(input) = plan.nodes.get(&(s, label.clone(), a)) else {
                        continue;
                    };
                    let (lineage, start) = match input {
                        NodeInput::Fresh => (
                            incoming
                                .get(&label)
                                .cloned()
                                .expect("fresh node without upstream lineage"),
                            0,
                        ),
                        NodeInput::Checkpoint(j) => (
                            Lineage::Live(
                                self.checkpoints[&CheckpointKey::new(&label, s, a, *j)].clone(),
                            ),
                            *j,
                        ),
                        NodeInput::StillDead(e) => (Lineage::Dead(e.clone()), 0),
                    };
                    let kept: Vec<OutputItem> = if start == 0 {
                        Vec::new()
                    } else {
                        let before: HashSet<&str> =
                            window.cells[..start].iter().map(|c| c.id.as_str()).collect();
                        self.results
                            .entry(&window.id, &c)
                            .map(|e| {
                                e.items
                                    .iter()
                                    .filter(|i| before.contains(i.cell_id.as_str()))
                                    .cloned()
                                    .collect()
                            })
                            .unwrap_or_default()
                    };
                    self.checkpoints.retain(|k, _| {
                        !(k.combination == label && k.stage == s && k.alt == a && k.cell_index >= start)
                    });
                    let mut entry = OutputEntry {
                        combination: c.clone(),
                        items: kept,
                        error: None,
                        skipped: false,
                    };
                    let cells = &window.cells[start..];
                    let out_lineage = match lineage {
                        Lineage::Dead(err) => {
                            for cell in cells {
                                self.mark(&cell.id, &c, &label, ExecStatus::Skipped, obs);
                            }
                            entry.error = Some(err.clone());
                            entry.skipped = true;
                            Lineage::Dead(err)
                        }
                        Lineage::Live(mut env) => {
                            for cell in cells {
                                self.mark(&cell.id, &c, &label, ExecStatus::Queued, obs);
                            }
                            let mut failed = None;
                            for (offset, cell) in cells.iter().enumerate() {
                                let idx = start + offset;
                                if failed.is_some() {
                                    self.mark(&cell.id, &c, &label, ExecStatus::Skipped, obs);
                                    continue;
                                }
                                self.checkpoints
                                    .insert(CheckpointKey::new(&label, s, a, idx), env.clone());
                                self.mark(&cell.id, &c, &label, ExecStatus::Running, obs);
                                let prog = programs
                                    .entry(cell.id.as_str())
                                    .or_insert_with(|| parse(&cell.source));
                                obs.evaluated(&cell.id, &c);
                                let result = match prog {
                                    Ok(p) => eval_cell(p, &env),
                                    Err(e) => CellResult {
                                        env: env.clone(),
                                        outputs: Vec::new(),
                                        error: Some(e.clone()),
                                    },
                                };
                                entry.items.extend(result.outputs.into_iter().map(|text| {
                                    OutputItem {
                                        cell_id: cell.id.clone(),
                                        text,
                                    }
                                }));
                                match result.error {
                                    Some(err) => {
                                        self.mark(&cell.id, &c, &label, ExecStatus::Error, obs);
                                        failed = Some(err);
                                    }
                                    None => {
                                        self.mark(&cell.id, &c, &label, ExecStatus::Ok, obs);
                                        env = result.env;
                                    }
                                }
                            }
                            match failed {
                                Some(err) => {
                                    entry.error = Some(err.clone());
                                    Lineage::Dead(err)
                                }
                                None => {
                                    self.checkpoints.insert(
                                        CheckpointKey::new(&label, s, a, window.cells.len()),
                                        env.clone(),
                                    );
                                    Lineage::Live(env)
                                }
                            }
                        }
                    };
                    obs.output(&window.id, &entry);
                    self.results.put_output(&window.id, entry);
                    let out_label = if stage.is_group() {
                        c.with(s, a).label()
                    } else {
                        label.clone()
                    };
                    outgoing.insert(out_label, out_lineage);
                }
            }
            incoming = outgoing;
        }
        self.shape = Some(nb.shape());
    }
}

/// Which windows (stage, upstream label, alternative) a run recomputes.
struct Plan {
    nodes: HashMap<(usize, String, usize), NodeInput>,
}

impl Plan {
    fn full(nb: &Notebook) -> Plan {
        let mut nodes = HashMap::new();
        for (s, stage) in nb.stages.iter().enumerate() {
            for c in upstream_combinations(nb, s) {
                for a in 0..stage.group_size() {
                    nodes.insert((s, c.label(), a), NodeInput::Fresh);
                }
            }
        }
        Plan { nodes }
    }

    /// None when some restart point has no usable checkpoint.
    fn incremental(nb: &Notebook, state: &ExecState, target: CellPos) -> Option<Plan> {
        let mut nodes = HashMap::new();
        let mut dirty: HashSet<String> = HashSet::new();
        for (s, stage) in nb.stages.iter().enumerate() {
            let mut next_dirty = HashSet::new();
            for c in upstream_combinations(nb, s) {
                let label = c.label();
                for (a, window) in stage.alternatives.iter().enumerate() {
                    let first_stale = window
                        .cells
                        .iter()
                        .position(|cell| state.status_of(&cell.id, &label) == ExecStatus::Stale);
                    let input = if dirty.contains(&label) {
                        NodeInput::Fresh
                    } else {
                        let start = if s < target.stage {
                            first_stale
                        } else if s == target.stage && a == target.alt {
                            Some(first_stale.map_or(target.index, |f| f.min(target.index)))
                        } else {
                            None
                        };
                        let Some(start) = start else { continue };
                        let entry = state.results.entry(&window.id, &c)?;
                        if entry.skipped {
                            NodeInput::StillDead(entry.error.clone()?)
                        } else {
                            let j = (0..=start).rev().find(|j| {
                                state
                                    .checkpoints
                                    .contains_key(&CheckpointKey::new(&label, s, a, *j))
                            })?;
                            NodeInput::Checkpoint(j)
                        }
                    };
                    nodes.insert((s, label.clone(), a), input);
                    next_dirty.insert(if stage.is_group() {
                        c.with(s, a).label()
                    } else {
                        label.clone()
                    });
                }
            }
            dirty = next_dirty;
        }
        Some(Plan { nodes })
    }
}
