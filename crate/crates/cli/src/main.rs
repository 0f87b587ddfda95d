//! `branchbook`: batch driver and service launcher.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Branch & merge notebooks from the command line.
#[derive(Parser)]
#[command(name = "branchbook", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute every combination and export the results.
    Run {
        file: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write one linear notebook per combination.
    Flatten {
        file: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Compare branched execution with every flattened notebook (exit 1 on divergence).
    Oracle {
        file: PathBuf,
        /// Also compare against a stored results file (.csv or .json).
        #[arg(long)]
        expected: Option<PathBuf>,
    },
    /// Print window poses (semicircle) or rects (desktop) as CSV.
    Layout {
        file: PathBuf,
        #[arg(long, value_enum)]
        mode: LayoutMode,
        #[command(flatten)]
        geometry: Geometry,
    },
    /// Metrics for one task of an interaction log, as JSON.
    Metrics {
        log: PathBuf,
        /// Task index, counting from 0.
        #[arg(long)]
        task: usize,
    },
    /// Check a notebook file against the format (exit 2 if invalid).
    Validate { file: PathBuf },
    /// Serve a notebook over HTTP.
    Serve {
        file: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Append received telemetry to this JSON-lines file.
        #[arg(long)]
        telemetry: Option<PathBuf>,
    },
    /// Talk to a running service.
    Remote {
        /// Server root, e.g. http://127.0.0.1:8080
        #[arg(long)]
        url: String,
        #[arg(long)]
        notebook: String,
        #[command(subcommand)]
        action: RemoteAction,
    },
}

#[derive(Subcommand)]
pub enum RemoteAction {
    /// Print the current snapshot.
    Snapshot,
    /// Send one command given as JSON, e.g. '{"op":"execute_all","client_seq":1}'.
    Command { json: String },
    /// Print exported results.
    Results {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Print deltas as JSON lines.
    Watch {
        #[arg(long, default_value_t = 0)]
        since: u64,
        /// Stop after this many deltas.
        #[arg(long)]
        count: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LayoutMode {
    Semicircle,
    Desktop,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Strategy {
    Orthogonal,
    Grid,
    Column,
}

#[derive(Args)]
pub struct Geometry {
    /// Arc radius in meters.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Window width in meters.
    #[arg(long, default_value_t = 0.35)]
    width: f64,
    /// Window height in meters.
    #[arg(long, default_value_t = 0.30)]
    height: f64,
    /// Arc length between windows in meters.
    #[arg(long, default_value_t = 0.0)]
    gap: f64,
    /// Widest allowed arc in radians.
    #[arg(long, default_value_t = std::f64::consts::PI)]
    max_span: f64,
    /// Place windows past the maximum span instead of failing.
    #[arg(long)]
    allow_overflow: bool,
    /// Placement of branch alternatives around the main window.
    #[arg(long, value_enum, default_value_t = Strategy::Orthogonal)]
    strategy: Strategy,
    /// Distance between branch alternatives in meters.
    #[arg(long, default_value_t = 0.4)]
    branch_spacing: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
