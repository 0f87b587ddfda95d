//! The staged notebook model and its structural edits.
//!
//! A notebook is an ordered list of stages. Each stage holds one or more
//! alternative windows; a stage with two or more alternatives is a branch
//! group. Downstream stages implicitly consume every alternative, which is
//! how branches merge back into the main path.
//!
//! Edits take `&self` and return a new notebook, leaving the input intact.

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub id: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub id: String,
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub id: String,
    pub alternatives: Vec<Window>,
}

impl Stage {
    pub fn is_group(&self) -> bool {
        self.alternatives.len() >= 2
    }

    pub fn group_size(&self) -> usize {
        self.alternatives.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Notebook {
    /// Optional; persisted only when non-empty.
    pub id: String,
    pub version: u32,
    pub title: String,
    pub stages: Vec<Stage>,
    /// Unknown top-level keys from the file, preserved in order.
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// Position of a window: stage index and alternative index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowPos {
    pub stage: usize,
    pub alt: usize,
}

/// Position of a cell inside its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellPos {
    pub stage: usize,
    pub alt: usize,
    pub index: usize,
}

impl CellPos {
    pub fn window(self) -> WindowPos {
        WindowPos {
            stage: self.stage,
            alt: self.alt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("unknown window `{0}`")]
    UnknownWindow(String),
    #[error("unknown cell `{0}`")]
    UnknownCell(String),
    #[error("empty cell selection")]
    EmptySelection,
    #[error("index {index} out of range (0..={len})")]
    IndexOutOfRange { index: usize, len: usize },
}

pub const CURRENT_VERSION: u32 = 1;

impl Default for Notebook {
    fn default() -> Self {
        Notebook {
            id: String::new(),
            version: CURRENT_VERSION,
            title: String::new(),
            stages: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }
}

impl Notebook {
    /// One single-window stage per inner list, cells in the given order.
    pub fn new_linear<S: AsRef<str>>(window_sources: &[Vec<S>]) -> Notebook {
        let mut nb = Notebook {
            title: "Untitled".to_string(),
            ..Notebook::default()
        };
        let mut cell_no = 0;
        for (i, sources) in window_sources.iter().enumerate() {
            let cells = sources
                .iter()
                .map(|s| {
                    cell_no += 1;
                    Cell {
                        id: format!("c{cell_no}"),
                        source: s.as_ref().to_string(),
                    }
                })
                .collect();
            nb.stages.push(Stage {
                id: format!("s{}", i + 1),
                alternatives: vec![Window {
                    id: format!("w{}", i + 1),
                    label: format!("Window {}", i + 1),
                    cells,
                }],
            });
        }
        nb
    }

    pub fn windows(&self) -> impl Iterator<Item = (WindowPos, &Window)> {
        self.stages.iter().enumerate().flat_map(|(s, stage)| {
            stage
                .alternatives
                .iter()
                .enumerate()
                .map(move |(a, w)| (WindowPos { stage: s, alt: a }, w))
        })
    }

    pub fn cells(&self) -> impl Iterator<Item = (CellPos, &Cell)> {
        self.windows().flat_map(|(p, w)| {
            w.cells.iter().enumerate().map(move |(i, c)| {
                (
                    CellPos {
                        stage: p.stage,
                        alt: p.alt,
                        index: i,
                    },
                    c,
                )
            })
        })
    }

    pub fn locate_window(&self, window_id: &str) -> Option<WindowPos> {
        self.windows().find(|(_, w)| w.id == window_id).map(|(p, _)| p)
    }

    pub fn locate_cell(&self, cell_id: &str) -> Option<CellPos> {
        self.cells().find(|(_, c)| c.id == cell_id).map(|(p, _)| p)
    }

    pub fn window(&self, pos: WindowPos) -> &Window {
        &self.stages[pos.stage].alternatives[pos.alt]
    }

    fn window_mut(&mut self, pos: WindowPos) -> &mut Window {
        &mut self.stages[pos.stage].alternatives[pos.alt]
    }

    pub fn window_by_id(&self, window_id: &str) -> Option<&Window> {
        self.windows().find(|(_, w)| w.id == window_id).map(|(_, w)| w)
    }

    pub fn cell_by_id(&self, cell_id: &str) -> Option<&Cell> {
        self.cells().find(|(_, c)| c.id == cell_id).map(|(_, c)| c)
    }

    /// All stage, window and cell ids, in notebook order.
    pub fn all_ids(&self) -> Vec<&str> {
        let mut ids = Vec::new();
        for stage in &self.stages {
            ids.push(stage.id.as_str());
            for w in &stage.alternatives {
                ids.push(w.id.as_str());
                ids.extend(w.cells.iter().map(|c| c.id.as_str()));
            }
        }
        ids
    }

    /// First id repeated anywhere in the notebook, if any.
    pub fn duplicate_id(&self) -> Option<&str> {
        let mut seen = HashSet::new();
        self.all_ids().into_iter().find(|id| !seen.insert(*id))
    }

    /// Next unused id of the form `{prefix}{n}`.
    fn fresh_id(&self, prefix: &str) -> String {
        let max = self
            .all_ids()
            .into_iter()
            .filter_map(|id| id.strip_prefix(prefix)?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        format!("{prefix}{}", max + 1)
    }

    fn find_window(&self, window_id: &str) -> Result<WindowPos, EditError> {
        self.locate_window(window_id)
            .ok_or_else(|| EditError::UnknownWindow(window_id.to_string()))
    }

    fn find_cell(&self, cell_id: &str) -> Result<CellPos, EditError> {
        self.locate_cell(cell_id)
            .ok_or_else(|| EditError::UnknownCell(cell_id.to_string()))
    }

    /// Appends a deep copy of the window as a new alternative of its stage.
    /// Downstream windows are not copied.
    pub fn branch(&self, window_id: &str) -> Result<(Notebook, String), EditError> {
        let pos = self.find_window(window_id)?;
        let mut nb = self.clone();
        let source = self.window(pos);
        let new_id = nb.fresh_id("w");
        let mut copy = Window {
            id: new_id.clone(),
            label: copy_label(&source.label, &self.stages[pos.stage]),
            cells: Vec::with_capacity(source.cells.len()),
        };
        for cell in &source.cells {
            let id = nb.fresh_id_with(&copy, "c");
            copy.cells.push(Cell {
                id,
                source: cell.source.clone(),
            });
        }
        nb.stages[pos.stage].alternatives.push(copy);
        Ok((nb, new_id))
    }

    // fresh_id that also accounts for a window not yet inserted
    fn fresh_id_with(&self, pending: &Window, prefix: &str) -> String {
        let base = self.fresh_id(prefix);
        let taken = |n: u64| pending.cells.iter().any(|c| c.id == format!("{prefix}{n}"));
        let mut n: u64 = base[prefix.len()..].parse().unwrap_or(1);
        while taken(n) {
            n += 1;
        }
        format!("{prefix}{n}")
    }

    /// Moves the given cells out of their window into a new single-window
    /// stage placed right after the source stage. Extracted cells keep
    /// their original relative order; the source window stays even if empty.
    pub fn extract(
        &self,
        source_window_id: &str,
        cell_ids: &[&str],
    ) -> Result<(Notebook, String), EditError> {
        let pos = self.find_window(source_window_id)?;
        if cell_ids.is_empty() {
            return Err(EditError::EmptySelection);
        }
        let source = self.window(pos);
        for id in cell_ids {
            if !source.cells.iter().any(|c| c.id == *id) {
                return Err(EditError::UnknownCell(id.to_string()));
            }
        }
        let mut nb = self.clone();
        let (taken, kept): (Vec<Cell>, Vec<Cell>) = source
            .cells
            .iter()
            .cloned()
            .partition(|c| cell_ids.contains(&c.id.as_str()));
        nb.window_mut(pos).cells = kept;
        let window_id = nb.fresh_id("w");
        let stage_id = nb.fresh_id("s");
        nb.stages.insert(
            pos.stage + 1,
            Stage {
                id: stage_id,
                alternatives: vec![Window {
                    id: window_id.clone(),
                    label: format!("{} (extract)", source.label),
                    cells: taken,
                }],
            },
        );
        Ok((nb, window_id))
    }

    /// Moves a cell to `target_index` of the target window. The index is
    /// interpreted after the cell has been removed from its current window.
    pub fn relocate(
        &self,
        cell_id: &str,
        target_window_id: &str,
        target_index: usize,
    ) -> Result<Notebook, EditError> {
        let from = self.find_cell(cell_id)?;
        let to = self.find_window(target_window_id)?;
        let mut nb = self.clone();
        let cell = nb.window_mut(from.window()).cells.remove(from.index);
        let target = nb.window_mut(to);
        if target_index > target.cells.len() {
            return Err(EditError::IndexOutOfRange {
                index: target_index,
                len: target.cells.len(),
            });
        }
        target.cells.insert(target_index, cell);
        Ok(nb)
    }

    pub fn delete_cells(&self, cell_ids: &[&str]) -> Result<Notebook, EditError> {
        for id in cell_ids {
            self.find_cell(id)?;
        }
        let mut nb = self.clone();
        for stage in &mut nb.stages {
            for w in &mut stage.alternatives {
                w.cells.retain(|c| !cell_ids.contains(&c.id.as_str()));
            }
        }
        Ok(nb)
    }

    /// Removes a window; a stage left without alternatives is removed too.
    pub fn delete_window(&self, window_id: &str) -> Result<Notebook, EditError> {
        let pos = self.find_window(window_id)?;
        let mut nb = self.clone();
        let stage = &mut nb.stages[pos.stage];
        stage.alternatives.remove(pos.alt);
        if stage.alternatives.is_empty() {
            nb.stages.remove(pos.stage);
        }
        Ok(nb)
    }

    pub fn edit_cell(&self, cell_id: &str, new_source: &str) -> Result<Notebook, EditError> {
        let pos = self.find_cell(cell_id)?;
        let mut nb = self.clone();
        nb.window_mut(pos.window()).cells[pos.index].source = new_source.to_string();
        Ok(nb)
    }

    /// Shape of the notebook without sources: window and cell ids per
    /// alternative per stage. Two notebooks with equal shapes differ only in
    /// cell sources, labels or titles.
    pub fn shape(&self) -> Shape {
        Shape(
            self.stages
                .iter()
                .map(|s| {
                    s.alternatives
                        .iter()
                        .map(|w| {
                            std::iter::once(w.id.clone())
                                .chain(w.cells.iter().map(|c| c.id.clone()))
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Shape(Vec<Vec<Vec<String>>>);

fn copy_label(label: &str, stage: &Stage) -> String {
    let base = strip_copy_suffix(label);
    let taken = |l: &str| stage.alternatives.iter().any(|w| w.label == l);
    let first = format!("{base} (copy)");
    if !taken(&first) {
        return first;
    }
    (2..)
        .map(|n| format!("{base} (copy {n})"))
        .find(|l| !taken(l))
        .expect("unbounded search")
}

fn strip_copy_suffix(label: &str) -> &str {
    if let Some(rest) = label.strip_suffix(" (copy)") {
        return rest;
    }
    if let Some(open) = label.rfind(" (copy ") {
        let tail = &label[open + 7..];
        if let Some(num) = tail.strip_suffix(')') {
            if !num.is_empty() && num.chars().all(|c| c.is_ascii_digit()) {
                return &label[..open];
            }
        }
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_windows() -> Notebook {
        Notebook::new_linear(&[
            vec!["a = 1", "b = 2", "c = 3"],
            vec!["k = 3"],
            vec!["show(a + k)"],
        ])
    }

    #[test]
    fn new_linear_shapes() {
        let nb = Notebook::new_linear(&[vec!["a=1"], vec!["show(a)"]]);
        assert_eq!(nb.stages.len(), 2);
        assert!(nb.stages.iter().all(|s| s.alternatives.len() == 1));
        assert_eq!(nb.stages[1].alternatives[0].cells[0].source, "show(a)");
        assert!(Notebook::new_linear::<&str>(&[]).stages.is_empty());
        let ten: Vec<Vec<String>> = (0..10).map(|i| vec![format!("x{i} = {i}")]).collect();
        let nb = Notebook::new_linear(&ten);
        assert_eq!(nb.stages.len(), 10);
        assert!(nb.duplicate_id().is_none());
    }

    #[test]
    fn branch_copies_window_only() {
        let nb = three_windows();
        let (b, new_id) = nb.branch("w2").unwrap();
        assert_eq!(b.stages[1].alternatives.len(), 2);
        let (orig, copy) = (&b.stages[1].alternatives[0], &b.stages[1].alternatives[1]);
        assert_eq!(copy.id, new_id);
        assert_ne!(orig.id, copy.id);
        assert_eq!(copy.label, "Window 2 (copy)");
        assert_eq!(
            orig.cells.iter().map(|c| &c.source).collect::<Vec<_>>(),
            copy.cells.iter().map(|c| &c.source).collect::<Vec<_>>()
        );
        assert_ne!(orig.cells[0].id, copy.cells[0].id);
        assert_eq!(b.stages[0], nb.stages[0]);
        assert_eq!(b.stages[2], nb.stages[2]);
        assert!(b.duplicate_id().is_none());
        // input untouched
        assert_eq!(nb.stages[1].alternatives.len(), 1);
    }

    #[test]
    fn branching_twice_makes_group_of_three() {
        let (b, first) = three_windows().branch("w2").unwrap();
        let (b, _) = b.branch(&first).unwrap();
        assert_eq!(b.stages[1].group_size(), 3);
        let labels: Vec<_> = b.stages[1].alternatives.iter().map(|w| w.label.as_str()).collect();
        assert_eq!(labels, ["Window 2", "Window 2 (copy)", "Window 2 (copy 2)"]);
        assert!(b.duplicate_id().is_none());
    }

    #[test]
    fn branch_unknown_window() {
        assert_eq!(
            three_windows().branch("nope").unwrap_err(),
            EditError::UnknownWindow("nope".into())
        );
    }

    #[test]
    fn extract_splices_after_source() {
        let nb = three_windows();
        let (e, wid) = nb.extract("w1", &["c2"]).unwrap();
        assert_eq!(e.stages.len(), 4);
        assert_eq!(e.stages[0].alternatives[0].cells.len(), 2);
        assert_eq!(e.stages[1].alternatives[0].id, wid);
        assert_eq!(e.stages[1].alternatives[0].cells[0].id, "c2");
        assert_eq!(e.stages[2], nb.stages[1]);
        assert!(e.duplicate_id().is_none());
    }

    #[test]
    fn extract_keeps_window_order_and_empty_source() {
        let nb = three_windows();
        let (e, _) = nb.extract("w1", &["c3", "c1", "c2"]).unwrap();
        assert!(e.stages[0].alternatives[0].cells.is_empty());
        let ids: Vec<_> = e.stages[1].alternatives[0].cells.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["c1", "c2", "c3"]);
    }

    #[test]
    fn extract_errors() {
        let nb = three_windows();
        assert_eq!(nb.extract("w1", &[]).unwrap_err(), EditError::EmptySelection);
        assert_eq!(nb.extract("w9", &["c1"]).unwrap_err(), EditError::UnknownWindow("w9".into()));
        assert_eq!(nb.extract("w1", &["c4"]).unwrap_err(), EditError::UnknownCell("c4".into()));
    }

    #[test]
    fn relocate_across_and_within_windows() {
        let nb = three_windows();
        let r = nb.relocate("c1", "w2", 1).unwrap();
        let ids = |w: &Window| w.cells.iter().map(|c| c.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&r.stages[0].alternatives[0]), ["c2", "c3"]);
        assert_eq!(ids(&r.stages[1].alternatives[0]), ["c4", "c1"]);

        let r = nb.relocate("c3", "w1", 0).unwrap();
        assert_eq!(ids(&r.stages[0].alternatives[0]), ["c3", "c1", "c2"]);

        assert_eq!(
            nb.relocate("c1", "w1", 3).unwrap_err(),
            EditError::IndexOutOfRange { index: 3, len: 2 }
        );
        assert_eq!(nb.relocate("zz", "w1", 0).unwrap_err(), EditError::UnknownCell("zz".into()));
        assert_eq!(nb.relocate("c1", "zz", 0).unwrap_err(), EditError::UnknownWindow("zz".into()));
    }

    #[test]
    fn delete_window_shrinks_group_then_stage() {
        let (b, copy) = three_windows().branch("w2").unwrap();
        let (b, copy2) = b.branch("w2").unwrap();
        let d = b.delete_window(&copy).unwrap();
        assert_eq!(d.stages[1].group_size(), 2);
        assert_eq!(d.stages[1].alternatives[1].id, copy2);
        let d = three_windows().delete_window("w3").unwrap();
        assert_eq!(d.stages.len(), 2);
        let all = Notebook::new_linear(&[vec!["x"]]).delete_window("w1").unwrap();
        assert!(all.stages.is_empty());
    }

    #[test]
    fn branch_then_delete_copy_is_identity() {
        let nb = three_windows();
        let (b, copy) = nb.branch("w3").unwrap();
        assert_eq!(b.delete_window(&copy).unwrap(), nb);
    }

    #[test]
    fn delete_and_edit_cells() {
        let nb = three_windows();
        let d = nb.delete_cells(&["c1", "c4"]).unwrap();
        assert_eq!(d.stages[0].alternatives[0].cells.len(), 2);
        assert!(d.stages[1].alternatives[0].cells.is_empty());
        assert_eq!(nb.delete_cells(&["c1", "bad"]).unwrap_err(), EditError::UnknownCell("bad".into()));

        let e = nb.edit_cell("c4", "k = 5").unwrap();
        assert_eq!(e.cell_by_id("c4").unwrap().source, "k = 5");
        assert_eq!(e.shape(), nb.shape());
        let e = nb.edit_cell("c4", "").unwrap();
        assert_eq!(e.cell_by_id("c4").unwrap().source, "");
        assert_eq!(nb.edit_cell("c99", "x").unwrap_err(), EditError::UnknownCell("c99".into()));
    }

    #[test]
    fn editing_a_copy_leaves_sibling_alone() {
        let (b, copy) = three_windows().branch("w2").unwrap();
        let copy_cell = b.window_by_id(&copy).unwrap().cells[0].id.clone();
        let e = b.edit_cell(&copy_cell, "k = 7").unwrap();
        assert_eq!(e.cell_by_id("c4").unwrap().source, "k = 3");
    }

    #[test]
    fn copy_label_suffixes() {
        assert_eq!(strip_copy_suffix("W (copy 12)"), "W");
        assert_eq!(strip_copy_suffix("W (copy)"), "W");
        assert_eq!(strip_copy_suffix("W (copy x)"), "W (copy x)");
    }
}
