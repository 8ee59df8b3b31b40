//! `ppgema`: run the labeling service, generate and replay datasets, train
//! the activity model and write the analytics reports.

mod commands;
mod remote;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ppgema", version, about = "PPG stress labeling with density-driven EMA queries")]
pub struct Cli {
    /// TOML configuration file; `PPGEMA_*` variables override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Where reports, datasets and models are written by default.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out_dir: PathBuf,
    /// Overrides the configured service data directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service until interrupted.
    Serve {
        /// Address to listen on, e.g. 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Generate a synthetic dataset.
    Simulate {
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        days: Option<f64>,
        /// Defaults to `<out-dir>/sim.ds`.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Decimal places kept for signal values.
        #[arg(long, default_value_t = 4)]
        decimals: i32,
    },
    /// Feed a dataset through the service as if it were live.
    Replay {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Stream time per wall-clock time; 0 runs unpaced.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        /// Reorder records by start time instead of failing on disorder.
        #[arg(long)]
        sort: bool,
        /// Skip the dataset's scripted answers.
        #[arg(long)]
        no_responses: bool,
        /// Send to a running service instead of the local data directory.
        #[arg(long, value_name = "URL")]
        url: Option<String>,
    },
    /// Train the activity forest and save it as JSON.
    TrainActivity {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Defaults to `<out-dir>/activity_model.json`.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Also write the training corpus as CSV.
        #[arg(long, value_name = "FILE")]
        export_corpus: Option<PathBuf>,
    },
    /// Leave-k-subjects-out evaluation of the activity forest.
    EvalActivity {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Subjects held out per fold.
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Write one analytics report as CSV under the output directory.
    Report {
        kind: ReportArg,
        /// Restrict to one subject.
        #[arg(long)]
        subject: Option<String>,
        /// Coverage distance; defaults to the configured D.
        #[arg(long)]
        d: Option<f64>,
        /// Longest gap in the temporal report, in minutes.
        #[arg(long, default_value_t = ppgema_core::analytics::DEFAULT_HORIZON_MIN)]
        horizon_min: u32,
        /// Smallest group shown in the quality report.
        #[arg(long, default_value_t = ppgema_core::analytics::DEFAULT_MIN_COUNT)]
        min_count: usize,
    },
    /// Write an engine checkpoint for every subject in the data directory.
    Checkpoint,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Labelled feature CSV; without it the simulator corpus is used.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Simulator corpus size.
    #[arg(long, default_value_t = 6)]
    pub corpus_subjects: usize,
    /// Simulator windows per subject and activity.
    #[arg(long, default_value_t = 3)]
    pub corpus_windows: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 12)]
    pub max_depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportArg {
    Coverage,
    Temporal,
    Quality,
    #[value(alias = "responses")]
    Response,
}

fn main() -> ExitCode {
    // Usage errors exit with 2 through clap.
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
