use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use branchbook_client::{Client, CommandOutcome};
use branchbook_core::layout::{
    branch_poses, desktop_layout, semicircle, BranchStrategy, LayoutConfig, LayoutError, PixelConfig,
};
use branchbook_core::oracle::{check_flatten, compare_rows};
use branchbook_core::persistence::{
    export_results, flat_file_name, flatten, load, parse_results, result_rows, save, ExportFormat,
};
use branchbook_core::telemetry::{compute_metrics, load_log};
use branchbook_core::{engine::full_combinations, ExecState, Notebook};
use branchbook_service::{AppState, NotebookHandle};
use futures::StreamExt;

use super::{Cmd, Format, Geometry, LayoutMode, RemoteAction, Strategy};

pub enum CliError {
    Divergence(String),
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Divergence(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Divergence(m) => write!(f, "divergence: {m}"),
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn input(e: impl fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn internal(e: impl fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_notebook(path: &Path) -> Result<Notebook> {
    load(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn export_format(f: Format) -> ExportFormat {
    match f {
        Format::Csv => ExportFormat::Csv,
        Format::Json => ExportFormat::Json,
    }
}

fn stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|_| out.flush()).map_err(internal)
}

pub fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { file, out, format } => run(&file, out.as_deref(), format),
        Cmd::Flatten { file, outdir } => flatten_cmd(&file, &outdir),
        Cmd::Oracle { file, expected } => oracle(&file, expected.as_deref()),
        Cmd::Layout { file, mode, geometry } => layout(&file, mode, &geometry),
        Cmd::Metrics { log, task } => metrics(&log, task),
        Cmd::Validate { file } => validate(&file),
        Cmd::Serve { file, port, host, telemetry } => serve(&file, &host, port, telemetry),
        Cmd::Remote { url, notebook, action } => remote(&url, &notebook, action),
    }
}

fn run(file: &Path, out: Option<&Path>, format: Format) -> Result<()> {
    let nb = load_notebook(file)?;
    let state = ExecState::execute_all(&nb);
    let bytes = export_results(&nb, &state.results, export_format(format));
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| internal(format!("{}: {e}", path.display()))),
        None => stdout(&bytes),
    }
}

fn flatten_cmd(file: &Path, outdir: &Path) -> Result<()> {
    let nb = load_notebook(file)?;
    fs::create_dir_all(outdir).map_err(internal)?;
    for (combo, flat) in flatten(&nb) {
        let path = outdir.join(flat_file_name(&combo));
        fs::write(&path, save(&flat)).map_err(|e| internal(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn oracle(file: &Path, expected: Option<&Path>) -> Result<()> {
    let nb = load_notebook(file)?;
    let compared = check_flatten(&nb).map_err(|d| CliError::Divergence(d.to_string()))?;
    if let Some(path) = expected {
        let format = if path.extension().is_some_and(|e| e == "json") {
            ExportFormat::Json
        } else {
            ExportFormat::Csv
        };
        let want = parse_results(&read(path)?, format).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let got = result_rows(&nb, &ExecState::execute_all(&nb).results);
        compare_rows(&want, &got).map_err(|d| CliError::Divergence(d.to_string()))?;
    }
    println!(
        "ok: {compared} window outputs match across {} combinations",
        full_combinations(&nb).len()
    );
    Ok(())
}

fn layout(file: &Path, mode: LayoutMode, g: &Geometry) -> Result<()> {
    let nb = load_notebook(file)?;
    let mut out = String::new();
    match mode {
        LayoutMode::Semicircle => {
            let cfg = LayoutConfig {
                radius: g.radius,
                window_width: g.width,
                window_height: g.height,
                gap: g.gap,
                max_span: g.max_span,
                allow_overflow: g.allow_overflow,
                ..LayoutConfig::default()
            };
            let strategy = match g.strategy {
                Strategy::Orthogonal => BranchStrategy::Orthogonal,
                Strategy::Grid => BranchStrategy::Grid,
                Strategy::Column => BranchStrategy::Column,
            };
            let bases = semicircle(&cfg, nb.stages.len()).map_err(|e: LayoutError| input(e))?;
            out.push_str("window_id,stage_index,alt_index,x,y,z,yaw\n");
            for (s, (stage, base)) in nb.stages.iter().zip(bases).enumerate() {
                let poses = branch_poses(strategy, base, stage.alternatives.len(), g.branch_spacing, &cfg);
                for (a, (w, p)) in stage.alternatives.iter().zip(poses).enumerate() {
                    out.push_str(&format!("{},{s},{a},{},{},{},{}\n", w.id, p.x, p.y, p.z, p.yaw));
                }
            }
        }
        LayoutMode::Desktop => {
            let rects = desktop_layout(&nb, &PixelConfig::default());
            out.push_str("window_id,stage_index,alt_index,x,y,width,height,column\n");
            for (pos, w) in nb.windows() {
                let r = rects[&w.id];
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    w.id, pos.stage, pos.alt, r.x, r.y, r.width, r.height, r.column
                ));
            }
        }
    }
    stdout(out.as_bytes())
}

fn metrics(log: &Path, task: usize) -> Result<()> {
    let events = load_log(&read(log)?).map_err(|e| input(format!("{}: {e}", log.display())))?;
    let report = compute_metrics(&events, task).map_err(input)?;
    let mut json = serde_json::to_vec_pretty(&report).map_err(internal)?;
    json.push(b'\n');
    stdout(&json)
}

fn validate(file: &Path) -> Result<()> {
    let nb = load_notebook(file)?;
    let windows = nb.windows().count();
    let cells = nb.cells().count();
    println!(
        "ok: {} stages, {windows} windows, {cells} cells, {} combinations",
        nb.stages.len(),
        full_combinations(&nb).len()
    );
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Runtime::new().map_err(internal)
}

fn serve(file: &Path, host: &str, port: u16, telemetry: Option<std::path::PathBuf>) -> Result<()> {
    let nb = load_notebook(file)?;
    let id = if nb.id.is_empty() {
        file.file_name()
            .and_then(|n| n.to_str())
            .map(|n| n.trim_end_matches(".json").trim_end_matches(".nbk").to_string())
            .unwrap_or_else(|| "notebook".to_string())
    } else {
        nb.id.clone()
    };
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| input(format!("cannot bind {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(internal)?;
        let state = AppState::new();
        state.insert(id.clone(), NotebookHandle::spawn(nb, telemetry).map_err(input)?);
        println!("serving notebook `{id}` at http://{addr}/nb/{id}/");
        branchbook_service::serve(listener, state).await.map_err(internal)
    })
}

fn remote(url: &str, notebook: &str, action: RemoteAction) -> Result<()> {
    let client = Client::new(url, notebook);
    let remote_err = |e: branchbook_client::ClientError| match &e {
        branchbook_client::ClientError::Api { status, .. } if (400..500).contains(status) => input(e),
        _ => internal(e),
    };
    runtime()?.block_on(async move {
        match action {
            RemoteAction::Snapshot => {
                let snap = client.snapshot().await.map_err(remote_err)?;
                println!("{}", serde_json::to_string_pretty(&snap).map_err(internal)?);
            }
            RemoteAction::Command { json } => {
                let body: serde_json::Value = serde_json::from_str(&json).map_err(input)?;
                let outcome = client.command_json(&body).await.map_err(remote_err)?;
                if let CommandOutcome::Replayed(_) = outcome {
                    eprintln!("already applied");
                }
                println!("{}", serde_json::to_string(outcome.ack()).map_err(internal)?);
            }
            RemoteAction::Results { format } => {
                let bytes = client.results(export_format(format)).await.map_err(remote_err)?;
                stdout(&bytes)?;
            }
            RemoteAction::Watch { since, count } => {
                let deltas = client.events(since).await.map_err(remote_err)?;
                let mut deltas = std::pin::pin!(deltas.take(count.unwrap_or(usize::MAX)));
                while let Some(d) = deltas.next().await {
                    let d = d.map_err(remote_err)?;
                    println!("{}", serde_json::to_string(&d).map_err(internal)?);
                }
            }
        }
        Ok(())
    })
}
