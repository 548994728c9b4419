//! `flowtx`: generate flows, train and evaluate classifiers, compare score files.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowtx_core::dataio::ProfileName;
use flowtx_core::model::ModelKind;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "flowtx", version, about = "Transformer intrusion detection over network-flow records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic flow CSV in the UNSW column layout.
    Synth(SynthArgs),
    /// Fit the schema and train a classifier; writes checkpoint, log and manifest.
    Train(TrainArgs),
    /// Score a labelled CSV with a checkpoint and print the metrics table and JSON.
    Eval(EvalArgs),
    /// Write per-record attack probabilities.
    Predict(PredictArgs),
    /// Compare externally produced score files against one label file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyArg {
    Separable,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of records (at least 10).
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "separable")]
    pub difficulty: DifficultyArg,
    /// Target Bayes error for `--difficulty noisy`.
    #[arg(long, default_value_t = 0.1)]
    pub bayes_error: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest path [default: <out>.manifest.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "unsw")]
    pub profile: ProfileName,
    /// Model kind; defaults to the config file's `model`, else pllm.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Flat JSON object overriding any training field.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Per-epoch CSV [default: <checkpoint>.log.csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Held-out metrics JSON [default: <checkpoint>.metrics.json]
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Manifest path [default: <checkpoint>.manifest.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Read the data with this profile instead of the checkpoint's.
    #[arg(long)]
    pub profile: Option<ProfileName>,
    /// Evaluate only one part of the training split (recomputed from the checkpoint's seed).
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,
    /// Decision threshold [default: the checkpoint's, else 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Row label in the table [default: the model kind]
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// ROC points as `fpr,tpr` CSV.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// Manifest path [default: standard error]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub profile: Option<ProfileName>,
    #[arg(long)]
    pub out_scores: PathBuf,
    /// Manifest path [default: <out-scores>.manifest.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Score CSVs with a `score` column (else the last column is used).
    #[arg(long = "scores", num_args = 1.., required = true)]
    pub scores: Vec<PathBuf>,
    /// Label CSV with a `label` column (else the last column is used).
    #[arg(long)]
    pub labels: PathBuf,
    /// One row name per scores file [default: file stems]
    #[arg(long = "names", num_args = 1..)]
    pub names: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Manifest path [default: standard error]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::from(error::exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
