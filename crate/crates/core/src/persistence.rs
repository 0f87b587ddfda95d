//! `.nbk.json` notebook files, result export, and flattening.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::engine::{full_combinations, Combination, OutputEntry, Results};
use crate::notebook::{Cell, Notebook, Stage, Window, CURRENT_VERSION};

pub const SUPPORTED_VERSIONS: &[u32] = &[CURRENT_VERSION];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("schema error at {}: {message}", pointer_or_root(.path))]
    Schema { path: String, message: String },
    #[error("unsupported version {found}; supported versions: {supported:?}")]
    Version { found: i64, supported: Vec<u32> },
}

fn pointer_or_root(path: &str) -> &str {
    if path.is_empty() {
        "document root"
    } else {
        path
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

/// Serializes with a fixed key order, two-space indentation and a final newline.
pub fn save(nb: &Notebook) -> Vec<u8> {
    let mut root = Map::new();
    root.insert("version".into(), nb.version.into());
    root.insert("title".into(), nb.title.clone().into());
    let stages = nb
        .stages
        .iter()
        .map(|s| {
            let mut so = Map::new();
            so.insert("id".into(), s.id.clone().into());
            let alts = s
                .alternatives
                .iter()
                .map(|w| {
                    let mut wo = Map::new();
                    wo.insert("id".into(), w.id.clone().into());
                    wo.insert("label".into(), w.label.clone().into());
                    let cells = w
                        .cells
                        .iter()
                        .map(|c| {
                            let mut co = Map::new();
                            co.insert("id".into(), c.id.clone().into());
                            co.insert("source".into(), c.source.clone().into());
                            Json::Object(co)
                        })
                        .collect();
                    wo.insert("cells".into(), Json::Array(cells));
                    Json::Object(wo)
                })
                .collect();
            so.insert("alternatives".into(), Json::Array(alts));
            Json::Object(so)
        })
        .collect();
    root.insert("stages".into(), Json::Array(stages));
    if !nb.id.is_empty() {
        root.insert("id".into(), nb.id.clone().into());
    }
    for (k, v) in &nb.extra {
        root.insert(k.clone(), v.clone());
    }
    let mut out = serde_json::to_vec_pretty(&Json::Object(root)).expect("json values serialize");
    out.push(b'\n');
    out
}

/// The saved document as a JSON value.
pub fn to_json(nb: &Notebook) -> Json {
    serde_json::from_slice(&save(nb)).expect("saved notebooks are valid JSON")
}

pub fn from_json(doc: &Json) -> Result<Notebook, FormatError> {
    load(&serde_json::to_vec(doc).expect("json values serialize"))
}

/// Parses and validates a notebook file, including id uniqueness and
/// non-empty stages.
pub fn load(bytes: &[u8]) -> Result<Notebook, FormatError> {
    let root: Json =
        serde_json::from_slice(bytes).map_err(|e| schema("", format!("invalid JSON: {e}")))?;
    let Json::Object(mut obj) = root else {
        return Err(schema("", "expected an object"));
    };
    let version = obj.shift_remove("version").ok_or_else(|| schema("/version", "missing"))?;
    let version = version
        .as_i64()
        .ok_or_else(|| schema("/version", "expected an integer"))?;
    if !SUPPORTED_VERSIONS.iter().any(|v| i64::from(*v) == version) {
        return Err(FormatError::Version {
            found: version,
            supported: SUPPORTED_VERSIONS.to_vec(),
        });
    }
    let title = take_str(&mut obj, "", "title")?;
    let id = match obj.shift_remove("id") {
        None => String::new(),
        Some(Json::String(s)) => s,
        Some(_) => return Err(schema("/id", "expected a string")),
    };
    let stages_json = obj.shift_remove("stages").ok_or_else(|| schema("/stages", "missing"))?;
    let Json::Array(stages_json) = stages_json else {
        return Err(schema("/stages", "expected an array"));
    };
    let mut stages = Vec::with_capacity(stages_json.len());
    for (si, sj) in stages_json.into_iter().enumerate() {
        let sp = format!("/stages/{si}");
        let mut so = object(sj, &sp)?;
        let sid = take_str(&mut so, &sp, "id")?;
        let alts = array(so.shift_remove("alternatives"), &format!("{sp}/alternatives"))?;
        if alts.is_empty() {
            return Err(schema(format!("{sp}/alternatives"), "a stage needs at least one window"));
        }
        let mut alternatives = Vec::with_capacity(alts.len());
        for (ai, aj) in alts.into_iter().enumerate() {
            let ap = format!("{sp}/alternatives/{ai}");
            let mut wo = object(aj, &ap)?;
            let wid = take_str(&mut wo, &ap, "id")?;
            let label = take_str(&mut wo, &ap, "label")?;
            let cells_json = array(wo.shift_remove("cells"), &format!("{ap}/cells"))?;
            let mut cells = Vec::with_capacity(cells_json.len());
            for (ci, cj) in cells_json.into_iter().enumerate() {
                let cp = format!("{ap}/cells/{ci}");
                let mut co = object(cj, &cp)?;
                cells.push(Cell {
                    id: take_str(&mut co, &cp, "id")?,
                    source: take_str(&mut co, &cp, "source")?,
                });
            }
            alternatives.push(Window {
                id: wid,
                label,
                cells,
            });
        }
        stages.push(Stage {
            id: sid,
            alternatives,
        });
    }
    let nb = Notebook {
        id,
        version: version as u32,
        title,
        stages,
        extra: obj,
    };
    if let Some(dup) = nb.duplicate_id() {
        return Err(schema(id_path(&nb, dup), format!("duplicate id `{dup}`")));
    }
    Ok(nb)
}

fn object(v: Json, path: &str) -> Result<Map<String, Json>, FormatError> {
    match v {
        Json::Object(o) => Ok(o),
        _ => Err(schema(path, "expected an object")),
    }
}

fn array(v: Option<Json>, path: &str) -> Result<Vec<Json>, FormatError> {
    match v {
        Some(Json::Array(a)) => Ok(a),
        Some(_) => Err(schema(path, "expected an array")),
        None => Err(schema(path, "missing")),
    }
}

fn take_str(obj: &mut Map<String, Json>, parent: &str, key: &str) -> Result<String, FormatError> {
    match obj.shift_remove(key) {
        Some(Json::String(s)) => Ok(s),
        Some(_) => Err(schema(format!("{parent}/{key}"), "expected a string")),
        None => Err(schema(format!("{parent}/{key}"), "missing")),
    }
}

/// Path of the second occurrence of `id`.
fn id_path(nb: &Notebook, id: &str) -> String {
    let mut seen = 0;
    for (si, s) in nb.stages.iter().enumerate() {
        let mut check = |path: String, candidate: &str| -> Option<String> {
            if candidate == id {
                seen += 1;
                if seen == 2 {
                    return Some(path);
                }
            }
            None
        };
        if let Some(p) = check(format!("/stages/{si}/id"), &s.id) {
            return p;
        }
        for (ai, w) in s.alternatives.iter().enumerate() {
            if let Some(p) = check(format!("/stages/{si}/alternatives/{ai}/id"), &w.id) {
                return p;
            }
            for (ci, c) in w.cells.iter().enumerate() {
                if let Some(p) = check(format!("/stages/{si}/alternatives/{ai}/cells/{ci}/id"), &c.id) {
                    return p;
                }
            }
        }
    }
    String::new()
}

/// One linear notebook per full combination, in enumeration order. Each
/// branch group is replaced by the chosen window; ids are kept.
pub fn flatten(nb: &Notebook) -> Vec<(Combination, Notebook)> {
    full_combinations(nb)
        .into_iter()
        .map(|c| {
            let mut flat = nb.clone();
            for (s, stage) in flat.stages.iter_mut().enumerate() {
                if let Some(a) = c.get(s) {
                    let chosen = stage.alternatives.swap_remove(a);
                    stage.alternatives = vec![chosen];
                }
            }
            (c, flat)
        })
        .collect()
}

/// File name for a flattened notebook.
pub fn flat_file_name(c: &Combination) -> String {
    if c.is_empty() {
        "linear.nbk.json".to_string()
    } else {
        format!("{}.nbk.json", c.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Ok,
    Error,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub stage_index: usize,
    pub window_id: String,
    pub window_label: String,
    pub combination_label: String,
    pub output_index: usize,
    pub kind: RowKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

pub(crate) fn entry_rows(entry: &OutputEntry) -> Vec<(RowKind, String)> {
    if entry.skipped {
        return vec![(RowKind::Skipped, String::new())];
    }
    let mut rows: Vec<_> = entry
        .items
        .iter()
        .map(|i| (RowKind::Ok, i.text.clone()))
        .collect();
    if let Some(e) = &entry.error {
        rows.push((RowKind::Error, format!("{}: {}", e.kind, e.message)));
    }
    rows
}

/// Flattens outputs into rows ordered by stage, then combination (in
/// enumeration order), then alternative, then output index.
pub fn result_rows(nb: &Notebook, results: &Results) -> Vec<ResultRow> {
    let mut keyed = Vec::new();
    for (pos, w) in nb.windows() {
        for entry in results.outputs(&w.id) {
            for (i, (kind, text)) in entry_rows(entry).into_iter().enumerate() {
                keyed.push((
                    (pos.stage, entry.combination.clone(), pos.alt, i),
                    ResultRow {
                        stage_index: pos.stage,
                        window_id: w.id.clone(),
                        window_label: w.label.clone(),
                        combination_label: entry.combination.label(),
                        output_index: i,
                        kind,
                        text,
                    },
                ));
            }
        }
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.into_iter().map(|(_, r)| r).collect()
}

pub fn export_results(nb: &Notebook, results: &Results, format: ExportFormat) -> Vec<u8> {
    let rows = result_rows(nb, results);
    match format {
        ExportFormat::Csv => rows_to_csv(&rows),
        ExportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(&rows).expect("rows serialize");
            out.push(b'\n');
            out
        }
    }
}

const CSV_HEADER: [&str; 7] = [
    "stage_index",
    "window_id",
    "window_label",
    "combination_label",
    "output_index",
    "kind",
    "text",
];

pub fn rows_to_csv(rows: &[ResultRow]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Reads rows written by [`export_results`] in either format.
pub fn parse_results(bytes: &[u8], format: ExportFormat) -> Result<Vec<ResultRow>, String> {
    match format {
        ExportFormat::Json => serde_json::from_slice(bytes).map_err(|e| e.to_string()),
        ExportFormat::Csv => csv::Reader::from_reader(bytes)
            .deserialize()
            .collect::<Result<Vec<ResultRow>, _>>()
            .map_err(|e| e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ExecState;

    fn sample() -> Notebook {
        let nb = Notebook::new_linear(&[vec!["k = 3", "show(k)"], vec!["show(\"a,b\")"]]);
        nb.branch("w1").unwrap().0
    }

    #[test]
    fn save_load_round_trip() {
        let nb = sample();
        let bytes = save(&nb);
        let back = load(&bytes).unwrap();
        assert_eq!(back, nb);
        assert_eq!(save(&back), bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("{\n  \"version\": 1,\n  \"title\": \"Untitled\",\n  \"stages\""));
        assert!(text.ends_with("}\n"));
    }

    #[test]
    fn unknown_keys_survive() {
        let src = br#"{"version":1,"title":"t","stages":[],"zeta":{"a":1},"alpha":true}"#;
        let nb = load(src).unwrap();
        let text = String::from_utf8(save(&nb)).unwrap();
        assert!(text.find("zeta").unwrap() < text.find("alpha").unwrap());
        assert_eq!(load(text.as_bytes()).unwrap(), nb);
    }

    #[test]
    fn schema_errors_name_the_path() {
        let err = load(br#"{"version":1,"title":"t"}"#).unwrap_err();
        assert_eq!(err, FormatError::Schema { path: "/stages".into(), message: "missing".into() });
        let err = load(br#"{"version":1,"title":"t","stages":[{"id":"s1","alternatives":[{"id":"w1","label":"x","cells":[{"id":"c1"}]}]}]}"#).unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "/stages/0/alternatives/0/cells/0/source"));
        let err = load(br#"{"version":1,"title":"t","stages":[{"id":"s1","alternatives":[]}]}"#).unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "/stages/0/alternatives"));
        let err = load(br#"{"version":1,"title":"t","stages":[{"id":"s1","alternatives":[{"id":"s1","label":"","cells":[]}]}]}"#).unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "/stages/0/alternatives/0/id"));
        assert!(matches!(load(b"not json"), Err(FormatError::Schema { .. })));
    }

    #[test]
    fn version_two_is_rejected() {
        let err = load(br#"{"version":2,"title":"t","stages":[]}"#).unwrap_err();
        assert_eq!(err, FormatError::Version { found: 2, supported: vec![1] });
        assert!(err.to_string().contains("[1]"));
    }

    #[test]
    fn flatten_linear_and_two_way() {
        let linear = Notebook::new_linear(&[vec!["a"]]);
        let flat = flatten(&linear);
        assert_eq!(flat, vec![(Combination::empty(), linear)]);
        let nb = sample();
        let flat = flatten(&nb);
        assert_eq!(flat.len(), 2);
        assert_eq!(flat[0].1.stages[0].alternatives[0].id, "w1");
        assert_eq!(flat[1].1.stages[0].alternatives[0].id, nb.stages[0].alternatives[1].id);
        assert_eq!(flat[0].1.stages[1], flat[1].1.stages[1]);
        assert_eq!(flat_file_name(&flat[1].0), "s0=1.nbk.json");
        assert_eq!(flat_file_name(&Combination::empty()), "linear.nbk.json");
    }

    #[test]
    fn csv_export_quotes_and_orders() {
        let nb = sample();
        let state = ExecState::execute_all(&nb);
        let csv = String::from_utf8(export_results(&nb, &state.results, ExportFormat::Csv)).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "stage_index,window_id,window_label,combination_label,output_index,kind,text");
        assert_eq!(lines[1], "0,w1,Window 1,,0,ok,3");
        assert_eq!(lines[3], "1,w2,Window 2,s0=0,0,ok,\"a,b\"");
        assert_eq!(lines.len(), 5);
        let rows = parse_results(csv.as_bytes(), ExportFormat::Csv).unwrap();
        assert_eq!(rows, result_rows(&nb, &state.results));
        let json = export_results(&nb, &state.results, ExportFormat::Json);
        assert_eq!(parse_results(&json, ExportFormat::Json).unwrap(), rows);
    }

    #[test]
    fn empty_notebook_exports_header_only() {
        let nb = Notebook::default();
        let state = ExecState::execute_all(&nb);
        let csv = export_results(&nb, &state.results, ExportFormat::Csv);
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "stage_index,window_id,window_label,combination_label,output_index,kind,text\n"
        );
    }

    #[test]
    fn error_lineage_rows() {
        let nb = Notebook::new_linear(&[vec!["show(1)", "error(\"bad\")"], vec!["show(2)"]]);
        let state = ExecState::execute_all(&nb);
        let rows = result_rows(&nb, &state.results);
        let kinds: Vec<_> = rows.iter().map(|r| (r.kind, r.text.as_str())).collect();
        assert_eq!(
            kinds,
            [(RowKind::Ok, "1"), (RowKind::Error, "UserError: bad"), (RowKind::Skipped, "")]
        );
    }
}
