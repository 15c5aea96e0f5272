//! `spanqe` command-line tool: one subcommand per analysis, reports as JSON + TSV.
//!
//! Exit codes: 0 success, 1 I/O error, 2 validation or estimation error.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spanqe::span_match::{DEFAULT_OC_THRESHOLD, DEFAULT_SIM_THRESHOLD};

#[derive(Parser, Debug)]
#[command(name = "spanqe", version, about = "Span-level translation error analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags every subcommand takes.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Run {
    /// Seed for all resampling. Defaults to a fixed constant.
    #[arg(long, default_value_t = spanqe::DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory for the report files.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Span agreement (OC and SIM) between two annotators.
    Agree(AgreeArgs),
    /// Character-level F1 and severity-weighted F1 with bootstrap CIs.
    Char(CharArgs),
    /// Nominal and unitized Krippendorff alpha.
    Reliability(ReliabilityArgs),
    /// Share of target spans overlapping source-anomaly anchors.
    Overlap(OverlapArgs),
    /// Descriptive span statistics per annotator.
    Stats(StatsArgs),
    /// Derive reference-side gold spans from contrastive items.
    Project(ProjectArgs),
    /// Score token-span predictions against projected gold spans.
    Spanloc(SpanlocArgs),
    /// Logistic association between annotated errors and correctness.
    Impact(ImpactArgs),
    /// Counterfactual ranking of evaluation models with errors switched off.
    Rank(ImpactArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AgreeArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OC_THRESHOLD)]
    pub oc_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_SIM_THRESHOLD)]
    pub sim_threshold: f64,
    /// Also report the fixed threshold sweeps.
    #[arg(long)]
    pub sweep: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: Run,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CharArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = spanqe::char_metrics::DEFAULT_REPLICATES)]
    pub boot: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: Run,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReliabilityArgs {
    #[arg(long)]
    pub segments: PathBuf,
    /// First rater.
    #[arg(long)]
    pub gold: PathBuf,
    /// Second rater.
    #[arg(long)]
    pub pred: PathBuf,
    /// Further raters.
    #[arg(long)]
    pub rater: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: Run,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OverlapArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Optional second annotator, reported alongside.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub anomalies: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: Run,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: Run,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub aces: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: Run,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SpanlocArgs {
    #[arg(long)]
    pub aces: PathBuf,
    /// Token-span predictions (JSON Lines).
    #[arg(long)]
    pub pred: PathBuf,
    /// Boundary slack in tokens for tolerant matching.
    #[arg(long, default_value_t = spanqe::refspan::DEFAULT_SLACK)]
    pub k: usize,
    /// Per-phenomenon weight cap for the capped mean.
    #[arg(long, default_value_t = spanqe::refspan::DEFAULT_CAP)]
    pub cap: usize,
    /// Phenomenon mapping TSV; the bundled table is used when absent.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: Run,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpecArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ImpactArgs {
    #[arg(long)]
    pub segments: PathBuf,
    /// Target-side annotations of the annotator that defines T.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub correctness: PathBuf,
    /// Source anomalies; items with any anomaly get S = 1.
    #[arg(long)]
    pub anomalies: Option<PathBuf>,
    /// Annotation sets with source-side spans; items with any get S = 1.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SpecArg::A)]
    pub spec: SpecArg,
    /// Drop the S regressor.
    #[arg(long)]
    pub omit_s: bool,
    #[arg(long, default_value_t = spanqe::impact::DEFAULT_REPLICATES)]
    pub boot: usize,
    /// Comma-separated dataset allowlist.
    #[arg(long, value_delimiter = ',')]
    pub datasets: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: Run,
}

fn configure_threads(run: &Run) {
    if let Some(jobs) = run.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Agree(a) => {
            configure_threads(&a.run);
            commands::agree(a)
        }
        Command::Char(a) => {
            configure_threads(&a.run);
            commands::char(a)
        }
        Command::Reliability(a) => {
            configure_threads(&a.run);
            commands::reliability(a)
        }
        Command::Overlap(a) => {
            configure_threads(&a.run);
            commands::overlap(a)
        }
        Command::Stats(a) => {
            configure_threads(&a.run);
            commands::stats(a)
        }
        Command::Project(a) => {
            configure_threads(&a.run);
            commands::project(a)
        }
        Command::Spanloc(a) => {
            configure_threads(&a.run);
            commands::spanloc(a)
        }
        Command::Impact(a) => {
            configure_threads(&a.run);
            commands::impact(a)
        }
        Command::Rank(a) => {
            configure_threads(&a.run);
            commands::rank(a)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spanqe: {e}");
            if e.is_io() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
