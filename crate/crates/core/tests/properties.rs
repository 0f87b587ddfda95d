use std::collections::BTreeMap;

use branchbook_core::engine::Combination;
use branchbook_core::layout::{semicircle, LayoutConfig};
use branchbook_core::minilang::{run_source, Environment, Value};
use branchbook_core::persistence::{load, save};
use branchbook_core::telemetry::{compute_metrics, load_log, Event, EventKind, EventLog};
use branchbook_core::{Cell, Notebook, Stage, Window};
use proptest::prelude::*;

const SOURCES: [&str; 5] = ["x = 1", "show(x)", "y = x * 2", "error(\"e\")", "z = [1, \"é\\n\"]"];

fn notebook_strategy() -> impl Strategy<Value = Notebook> {
    prop::collection::vec(prop::collection::vec(prop::collection::vec(0..SOURCES.len(), 0..4), 1..4), 0..5).prop_map(
        |stages| {
            let (mut s, mut w, mut c) = (0, 0, 0);
            let stages = stages
                .into_iter()
                .map(|alts| {
                    s += 1;
                    Stage {
                        id: format!("s{s}"),
                        alternatives: alts
                            .into_iter()
                            .map(|cells| {
                                w += 1;
                                Window {
                                    id: format!("w{w}"),
                                    label: format!("Window {w}"),
                                    cells: cells
                                        .into_iter()
                                        .map(|i| {
                                            c += 1;
                                            Cell { id: format!("c{c}"), source: SOURCES[i].to_string() }
                                        })
                                        .collect(),
                                }
                            })
                            .collect(),
                    }
                })
                .collect();
            Notebook { title: "t".into(), stages, ..Notebook::default() }
        },
    )
}

#[derive(Debug, Clone)]
enum Edit {
    Branch(usize),
    Extract(usize, usize),
    Relocate(usize, usize, usize),
    Delete(usize),
    DeleteWindow(usize),
    EditCell(usize, usize),
}

fn edit_strategy() -> impl Strategy<Value = Edit> {
    prop_oneof![
        any::<usize>().prop_map(Edit::Branch),
        (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Edit::Extract(a, b)),
        (any::<usize>(), any::<usize>(), 0..4usize).prop_map(|(a, b, i)| Edit::Relocate(a, b, i)),
        any::<usize>().prop_map(Edit::Delete),
        any::<usize>().prop_map(Edit::DeleteWindow),
        (any::<usize>(), 0..SOURCES.len()).prop_map(|(a, s)| Edit::EditCell(a, s)),
    ]
}

fn cell_sources(nb: &Notebook) -> BTreeMap<String, String> {
    nb.cells().map(|(_, c)| (c.id.clone(), c.source.clone())).collect()
}

fn pick<T: Clone>(items: &[T], i: usize) -> Option<T> {
    (!items.is_empty()).then(|| items[i % items.len()].clone())
}

proptest! {
    #[test]
    fn edits_keep_ids_unique_and_cells_accounted_for(nb in notebook_strategy(), edits in prop::collection::vec(edit_strategy(), 0..12)) {
        let mut nb = nb;
        for edit in edits {
            let windows: Vec<String> = nb.windows().map(|(_, w)| w.id.clone()).collect();
            let cells: Vec<String> = nb.cells().map(|(_, c)| c.id.clone()).collect();
            let before = cell_sources(&nb);
            let next = match &edit {
                Edit::Branch(w) => pick(&windows, *w).map(|w| {
                    let pos = nb.locate_window(&w).unwrap();
                    let (n, id) = nb.branch(&w).unwrap();
                    let copy = n.window_by_id(&id).unwrap();
                    let orig = nb.window(pos);
                    assert_eq!(n.stages[pos.stage].alternatives.len(), nb.stages[pos.stage].alternatives.len() + 1);
                    let srcs = |w: &Window| w.cells.iter().map(|c| c.source.clone()).collect::<Vec<_>>();
                    assert_eq!(srcs(copy), srcs(orig));
                    n
                }),
                Edit::Extract(w, c) => pick(&windows, *w).and_then(|w| {
                    let win = nb.window_by_id(&w).unwrap().clone();
                    let cell = pick(&win.cells, *c)?;
                    let (n, id) = nb.extract(&w, &[&cell.id]).unwrap();
                    let pos = nb.locate_window(&w).unwrap();
                    assert_eq!(n.locate_window(&id).unwrap().stage, pos.stage + 1);
                    assert_eq!(cell_sources(&n), before);
                    Some(n)
                }),
                Edit::Relocate(c, w, i) => pick(&cells, *c).zip(pick(&windows, *w)).and_then(|(c, w)| {
                    let n = nb.relocate(&c, &w, *i).ok()?;
                    assert_eq!(cell_sources(&n), before);
                    assert_eq!(n.window_by_id(&w).unwrap().cells[*i].id, c);
                    Some(n)
                }),
                Edit::Delete(c) => pick(&cells, *c).map(|c| {
                    let n = nb.delete_cells(&[&c]).unwrap();
                    assert!(n.cell_by_id(&c).is_none());
                    assert_eq!(n.cells().count() + 1, nb.cells().count());
                    n
                }),
                Edit::DeleteWindow(w) => pick(&windows, *w).map(|w| {
                    let n = nb.delete_window(&w).unwrap();
                    assert!(n.window_by_id(&w).is_none());
                    n
                }),
                Edit::EditCell(c, s) => pick(&cells, *c).map(|c| {
                    let n = nb.edit_cell(&c, SOURCES[*s]).unwrap();
                    assert_eq!(n.shape(), nb.shape());
                    n
                }),
            };
            if let Some(n) = next {
                nb = n;
            }
            prop_assert!(nb.duplicate_id().is_none());
            prop_assert!(nb.stages.iter().all(|s| !s.alternatives.is_empty()));
            let bytes = save(&nb);
            prop_assert_eq!(&load(&bytes).unwrap(), &nb);
            prop_assert_eq!(save(&nb), bytes);
        }
    }

    #[test]
    fn combination_labels_round_trip(pairs in prop::collection::btree_map(0..20usize, 0..5usize, 0..5)) {
        let c = pairs.iter().fold(Combination::empty(), |c, (s, a)| c.with(*s, *a));
        prop_assert_eq!(Combination::parse(&c.label()).unwrap(), c);
    }

    #[test]
    fn forked_environments_do_not_leak(writes in prop::collection::vec(("[a-e]", -50i64..50), 1..20)) {
        let mut parent = Environment::new();
        parent.set("a", Value::Int(7));
        let snapshot: Vec<(String, Value)> = parent.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let mut child = parent.fork();
        for (k, v) in &writes {
            child.set(k.clone(), Value::Int(*v));
        }
        let after: Vec<(String, Value)> = parent.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        prop_assert_eq!(after, snapshot);
    }

    #[test]
    fn failing_cells_leave_the_environment_alone(n in 0i64..100) {
        let env = run_source("k = 1", &Environment::new()).env;
        let r = run_source(&format!("k = {n}\nshow(k)\nk / 0"), &env);
        prop_assert!(r.error.is_some());
        prop_assert_eq!(r.outputs, vec![n.to_string()]);
        prop_assert_eq!(r.env.get("k"), Some(&Value::Int(1)));
    }

    #[test]
    fn telemetry_round_trips(gaps in prop::collection::vec((0u64..50, 0..4u8, -5i64..5), 0..100)) {
        let mut log = EventLog::new();
        let mut t = 0;
        for (gap, kind, v) in gaps {
            t += gap;
            let e = match kind {
                0 => Event::scroll(t, v),
                1 => Event::head_rotation(t, v as f64 * 1.5),
                2 => Event::walk(t, v as f64 / 4.0),
                _ => Event::new(t, EventKind::RunPressed),
            };
            log.append(e).unwrap();
        }
        prop_assert_eq!(load_log(&log.to_jsonl()).unwrap(), log.events().to_vec());
    }

    #[test]
    fn metrics_add_over_disjoint_tasks(a in prop::collection::vec((1u64..20, -5i64..5), 0..20), b in prop::collection::vec((1u64..20, -5i64..5), 0..20)) {
        let task = |start: u64, body: &[(u64, i64)]| {
            let mut events = vec![Event::new(start, EventKind::TaskStart)];
            let mut t = start;
            for (gap, v) in body {
                t += gap;
                events.push(if *v == 0 { Event::new(t, EventKind::RunPressed) } else { Event::scroll(t, *v) });
            }
            events.push(Event::new(t + 1, EventKind::TaskEnd));
            events
        };
        let first = task(0, &a);
        let second = task(first.last().unwrap().t_ms + 5, &b);
        let mut both = first.clone();
        // noise between the tasks is ignored
        both.push(Event::scroll(first.last().unwrap().t_ms + 2, 9));
        both.extend(second.clone());
        let sum = compute_metrics(&both, 0).unwrap() + compute_metrics(&both, 1).unwrap();
        prop_assert_eq!(sum, compute_metrics(&first, 0).unwrap() + compute_metrics(&second, 0).unwrap());
    }

    #[test]
    fn semicircle_is_symmetric(n in 1usize..9, width in 0.1f64..0.35, gap in 0.0f64..0.05) {
        let cfg = LayoutConfig { window_width: width, gap, ..LayoutConfig::default() };
        let poses = semicircle(&cfg, n).unwrap();
        for i in 0..n {
            let (p, q) = (poses[i], poses[n - 1 - i]);
            prop_assert!((p.x + q.x).abs() < 1e-12 && (p.z - q.z).abs() < 1e-12);
            prop_assert!((p.x.hypot(p.z) - cfg.radius).abs() < 1e-12);
        }
        for w in poses.windows(2) {
            prop_assert!((w[1].yaw - w[0].yaw - (width + gap) / cfg.radius).abs() < 1e-12);
        }
    }
}
