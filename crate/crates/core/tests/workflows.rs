//! Study-style tasks and multi-step edits on the fixture notebooks.

use branchbook_core::engine::{upstream_combinations, EvalCounter, ExecObserver};
use branchbook_core::persistence::{load, result_rows, RowKind};
use branchbook_core::{ExecState, ExecStatus, Notebook};

fn fixture(name: &str) -> Notebook {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    load(&std::fs::read(path).unwrap()).unwrap()
}

fn cell_with(nb: &Notebook, source: &str) -> String {
    nb.cells().find(|(_, c)| c.source == source).unwrap().1.id.clone()
}

/// Every cell ran fine in every lineage.
fn all_ok(nb: &Notebook, state: &ExecState) -> bool {
    nb.cells().all(|(pos, c)| {
        upstream_combinations(nb, pos.stage)
            .iter()
            .all(|k| state.status_of(&c.id, &k.label()) == ExecStatus::Ok)
    })
}

#[test]
fn deleting_the_error_cell_restores_every_window() {
    let nb = fixture("error_task.nbk.json");
    let before = ExecState::execute_all(&nb);
    assert!(!all_ok(&nb, &before));
    let bad = cell_with(&nb, "show(mean(scroes))");
    let fixed = nb.delete_cells(&[&bad]).unwrap();
    let after = ExecState::execute_all(&fixed);
    assert!(all_ok(&fixed, &after));
    for (_, w) in fixed.windows() {
        let entry = &after.outputs(&w.id)[0];
        assert!(!entry.items.is_empty() && entry.error.is_none(), "{}", w.id);
    }
    let sources = |nb: &Notebook| nb.cells().map(|(_, c)| c.source.clone()).collect::<Vec<_>>();
    assert_eq!(sources(&fixed), sources(&fixture("ten_windows.nbk.json")));
}

#[test]
fn relocating_the_definition_fixes_the_read() {
    let nb = fixture("relocation_task.nbk.json");
    let state = ExecState::execute_all(&nb);
    let rows = result_rows(&nb, &state.results);
    let err = rows.iter().find(|r| r.kind == RowKind::Error).unwrap();
    assert_eq!(err.window_id, "w3");
    assert!(err.text.starts_with("UndefinedVariable"));

    let def = cell_with(&nb, "threshold = 80");
    let moved = nb.relocate(&def, "w3", 0).unwrap();
    let state = ExecState::execute_all(&moved);
    assert!(all_ok(&moved, &state));
    let rows = result_rows(&moved, &state.results);
    assert!(rows.iter().any(|r| r.window_id == "w3" && r.text == "80"));
}

#[test]
fn branching_twice_then_once_gives_six_results() {
    let nb = Notebook::new_linear(&[
        vec!["base = 10"],
        vec!["k = 1"],
        vec!["y = base * k"],
        vec!["m = 1"],
        vec!["show(y + m)"],
    ]);
    let (nb, k2) = nb.branch("w2").unwrap();
    let (nb, k3) = nb.branch("w2").unwrap();
    let (nb, m2) = nb.branch("w4").unwrap();
    let edit = |nb: Notebook, w: &str, src: &str| {
        let c = nb.window_by_id(w).unwrap().cells[0].id.clone();
        nb.edit_cell(&c, src).unwrap()
    };
    let nb = edit(edit(edit(nb, &k2, "k = 2"), &k3, "k = 3"), &m2, "m = 100");
    let state = ExecState::execute_all(&nb);
    let texts: Vec<&str> = state.outputs("w5").iter().map(|e| e.items[0].text.as_str()).collect();
    assert_eq!(texts, ["11", "110", "21", "120", "31", "130"]);
}

#[test]
fn extract_from_a_group_member_adds_a_factor_of_one() {
    let nb = Notebook::new_linear(&[vec!["a = 1"], vec!["b = a", "c = b", "d = c", "show(d)"], vec!["show(a)"]]);
    let (nb, w_copy) = nb.branch("w2").unwrap();
    let cells: Vec<String> = nb.window_by_id(&w_copy).unwrap().cells.iter().map(|c| c.id.clone()).collect();
    let (ex, new_w) = nb.extract(&w_copy, &[&cells[1], &cells[3]]).unwrap();
    assert_eq!(ex.locate_window(&new_w).unwrap().stage, 2);
    assert_eq!(ex.stages[2].alternatives.len(), 1);
    let last = ex.stages.len() - 1;
    assert_eq!(upstream_combinations(&ex, last).len(), upstream_combinations(&nb, 2).len());
}

#[test]
fn deleting_an_alternative_shrinks_downstream_results() {
    let nb = fixture("knn_branch.nbk.json");
    assert_eq!(ExecState::execute_all(&nb).outputs("w8").len(), 6);
    let fewer = nb.delete_window("w3").unwrap();
    assert_eq!(ExecState::execute_all(&fewer).outputs("w8").len(), 4);
}

#[test]
fn edit_and_run_last_window_touches_only_that_window() {
    let nb = fixture("pipeline_six.nbk.json");
    let mut state = ExecState::execute_all(&nb);
    let before = state.results.clone();
    let last = nb.stages.last().unwrap().alternatives[0].cells[0].id.clone();
    let edited = nb.edit_cell(&last, "jitter = rand(4, w)").unwrap();
    state.invalidate(&edited, &last, &mut ()).unwrap();
    let mut counter = EvalCounter::default();
    state.run_from(&edited, &last, &mut counter as &mut dyn ExecObserver).unwrap();
    let ran: Vec<(&String, &u64)> = counter.counts.iter().collect();
    let last_window = &nb.stages.last().unwrap().alternatives[0];
    assert!(ran.iter().all(|(id, _)| last_window.cells.iter().any(|c| &c.id == *id)));
    assert_eq!(counter.counts[&last], 6);
    for (_, w) in nb.windows().filter(|(_, w)| w.id != last_window.id) {
        assert_eq!(state.outputs(&w.id), before.outputs(&w.id));
    }
    assert_eq!(state.results, ExecState::execute_all(&edited).results);
}
