use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "carbontag", version, about = "Estimate and label the energy cost of rendering online ads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate a per-sample measurement CSV into a per-ad dataset CSV
    Ingest(IngestArgs),
    /// Generate a seeded synthetic dataset from a ground-truth config
    Synth(SynthArgs),
    /// Select features, fit the estimator and write the model artifact
    Train(TrainArgs),
    /// Report R² and RMSE of a model artifact on a dataset, per device
    Validate(ValidateArgs),
    /// Grade normalized ad energy values on the A–G scale
    Label(LabelArgs),
    /// Convert a saved linear model into a model artifact
    Export(ExportArgs),
    /// Run the estimation service
    Serve(ServeArgs),
    /// Scale a per-ad energy up to daily and yearly global consumption
    Impact(ImpactArgs),
    /// Grade histogram of a service result log
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Measurement CSV, one row per (ad, device, sample)
    #[arg(long)]
    pub input: PathBuf,
    /// Output dataset CSV
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic config JSON
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `n` from the config
    #[arg(long)]
    pub n: Option<usize>,
    /// Overrides `noise_sigma` from the config
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset or measurement CSV
    #[arg(long)]
    pub dataset: PathBuf,
    /// Selection config JSON; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Artifact output path; reports are written next to it
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "v1")]
    pub model_version: String,
    /// Hold out this fraction of samples for validation
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Seed for the holdout split
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated candidate parameters
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<String>>,
    #[arg(long)]
    pub corr_threshold: Option<f64>,
    #[arg(long)]
    pub vif_threshold: Option<f64>,
    #[arg(long)]
    pub variance_threshold: Option<f64>,
    #[arg(long)]
    pub max_interaction_order: Option<usize>,
    /// Skip selection and fit exactly these features (`a` or `a×b`)
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Model artifact
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Normalized ad energy to grade
    #[arg(allow_negative_numbers = true, required_unless_present = "batch", conflicts_with = "batch")]
    pub value: Option<f64>,
    /// File with one value per line
    #[arg(long)]
    pub batch: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Linear model JSON (as written by `train`)
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Replace the model version string
    #[arg(long)]
    pub model_version: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Model artifact to load at startup
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "carbontag-log")]
    pub log_dir: PathBuf,
    /// fsync the log before acknowledging each batch
    #[arg(long)]
    pub fsync: bool,
    #[arg(long, default_value_t = 64 * 1024 * 1024)]
    pub max_segment_bytes: u64,
    /// Worker threads (defaults to the number of cores)
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ImpactArgs {
    /// Energy of one ad in kWh
    #[arg(long)]
    pub per_ad: f64,
    #[arg(long)]
    pub ads_per_day: u64,
    #[arg(long)]
    pub users: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, default_value = "carbontag-log")]
    pub log_dir: PathBuf,
    #[arg(long)]
    pub json: bool,
}
