//! Cross-checks branched execution against independent linear runs.

use std::fmt;

use crate::engine::ExecState;
use crate::notebook::Notebook;
use crate::persistence::{entry_rows, flatten, ResultRow, RowKind};

/// The first place two result sets disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub combination: String,
    pub window_id: String,
    pub output_index: usize,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &Option<String>| v.as_deref().map_or("<missing>".to_string(), |s| format!("{s:?}"));
        let combo = if self.combination.is_empty() { "<linear>" } else { &self.combination };
        write!(
            f,
            "window {} combination {} output {}: expected {}, got {}",
            self.window_id,
            combo,
            self.output_index,
            show(&self.expected),
            show(&self.actual)
        )
    }
}

fn row_text(kind: RowKind, text: &str) -> String {
    match kind {
        RowKind::Ok => text.to_string(),
        RowKind::Error => format!("error: {text}"),
        RowKind::Skipped => "skipped".to_string(),
    }
}

fn first_difference(a: &[String], b: &[String]) -> Option<(usize, Option<String>, Option<String>)> {
    (0..a.len().max(b.len()))
        .find(|&i| a.get(i) != b.get(i))
        .map(|i| (i, a.get(i).cloned(), b.get(i).cloned()))
}

/// Runs `nb` branched and every flattened notebook on its own, then
/// compares each window's rendered outputs and errors per lineage.
/// Returns the number of entries compared.
pub fn check_flatten(nb: &Notebook) -> Result<usize, Divergence> {
    let branched = ExecState::execute_all(nb);
    let mut compared = 0;
    for (combo, flat) in flatten(nb) {
        let linear = ExecState::execute_all(&flat);
        for (pos, w) in flat.windows() {
            let key = combo.prefix(pos.stage);
            let render = |e: Option<&crate::engine::OutputEntry>| -> Vec<String> {
                e.map(|e| entry_rows(e).into_iter().map(|(k, t)| row_text(k, &t)).collect())
                    .unwrap_or_default()
            };
            let expected = render(linear.outputs(&w.id).first());
            let actual = render(branched.results.entry(&w.id, &key));
            if let Some((i, e, a)) = first_difference(&expected, &actual) {
                return Err(Divergence {
                    combination: key.label(),
                    window_id: w.id.clone(),
                    output_index: i,
                    expected: e,
                    actual: a,
                });
            }
            compared += 1;
        }
    }
    Ok(compared)
}

/// Compares exported rows with a stored expectation, row by row.
pub fn compare_rows(expected: &[ResultRow], actual: &[ResultRow]) -> Result<(), Divergence> {
    let key = |r: &ResultRow| (r.window_id.clone(), r.combination_label.clone(), r.output_index);
    let text = |r: &ResultRow| row_text(r.kind, &r.text);
    for i in 0..expected.len().max(actual.len()) {
        match (expected.get(i), actual.get(i)) {
            (Some(e), Some(a)) if e == a => continue,
            (e, a) => {
                let (window_id, combination, output_index) = e.or(a).map(key).expect("one side exists");
                return Err(Divergence {
                    combination,
                    window_id,
                    output_index,
                    expected: e.map(text),
                    actual: a.map(text),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branched_matches_flattened() {
        let nb = Notebook::new_linear(&[vec!["k = 3"], vec!["show(k * 2)"], vec!["k + 1"]]);
        let (nb, w) = nb.branch("w1").unwrap();
        let nb = nb.edit_cell(&nb.window_by_id(&w).unwrap().cells[0].id, "k = 5").unwrap();
        assert_eq!(check_flatten(&nb), Ok(6));
    }

    #[test]
    fn row_mismatch_is_reported() {
        let nb = Notebook::new_linear(&[vec!["show(1)"]]);
        let rows = crate::persistence::result_rows(&nb, &ExecState::execute_all(&nb).results);
        let mut bad = rows.clone();
        bad[0].text = "2".into();
        let d = compare_rows(&bad, &rows).unwrap_err();
        assert_eq!(d.to_string(), "window w1 combination <linear> output 0: expected \"2\", got \"1\"");
    }
}
