//! Command-line front end for the tooth segmentation pipeline.
//!
//! Subcommands cover the full workflow: generate synthetic datasets,
//! inspect geometry features, train, run inference, and score results.
//! On failure every command prints a single JSON object to stderr
//! (`{"error": ..., "command": ...}`) and exits nonzero, so callers can
//! scrape failures without parsing prose.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Mesh(#[from] toothseg::MeshError),
    #[error(transparent)]
    Labels(#[from] toothseg::labels::LabelError),
    #[error(transparent)]
    Geometry(#[from] toothseg::geometry::GeometryError),
    #[error(transparent)]
    Network(#[from] toothseg::nn::network::NetworkError),
    #[error(transparent)]
    Checkpoint(#[from] toothseg::nn::checkpoint::CheckpointError),
    #[error(transparent)]
    Loss(#[from] toothseg::loss::LossError),
    #[error(transparent)]
    Train(#[from] toothseg::train::TrainError),
    #[error(transparent)]
    Synth(#[from] toothseg::train::synth::SynthError),
    #[error(transparent)]
    Infer(#[from] toothseg::infer::InferError),
    #[error(transparent)]
    Metrics(#[from] toothseg::metrics::MetricsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Msg(String),
}

fn version_string() -> &'static str {
    // Leaked once at startup; clap wants a 'static str.
    Box::leak(
        format!(
            "{} (checkpoint format v{})",
            env!("CARGO_PKG_VERSION"),
            toothseg::nn::checkpoint::FORMAT_VERSION
        )
        .into_boxed_str(),
    )
}

#[derive(Parser)]
#[command(
    name = "toothseg",
    about = "Tooth segmentation for intraoral scan meshes",
    version = version_string()
)]
struct Cli {
    /// Log progress details to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the per-face network input features of a mesh as CSV.
    Features(FeaturesArgs),
    /// Write one per-face curvature field of a mesh as CSV.
    Curvature(CurvatureArgs),
    /// Generate a labeled synthetic scan dataset.
    Synth(SynthArgs),
    /// Train a segmentation network on a dataset directory.
    Train(TrainArgs),
    /// Label every face of a mesh with a trained network.
    Infer(InferArgs),
    /// Score predictions against ground-truth labels.
    Eval(EvalArgs),
    /// Train one arm per curvature ranking signal and tabulate quality.
    CompareCurvatures(CompareArgs),
}

#[derive(Args)]
struct FeaturesArgs {
    /// Input mesh (.obj, .ply, or .stl, ASCII).
    mesh: PathBuf,
    /// Jaw side: maxillary/upper or mandible/lower.
    #[arg(long)]
    jaw: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurvatureArgs {
    /// Input mesh.
    mesh: PathBuf,
    /// Which field: point, gaussian, or mean.
    #[arg(long)]
    kind: String,
    /// For the point field: neighborhood over the mesh (two-hop) or in
    /// centroid space (knn).
    #[arg(long, default_value = "two-hop")]
    neighborhood: String,
    /// Neighbor count for the knn neighborhood.
    #[arg(long, default_value_t = 12)]
    k: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Number of scans.
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Seed of the first scan; scan i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML config file; the [synth] table overrides generator defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory with a manifest.json.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints and the step log.
    #[arg(long)]
    out: PathBuf,
    /// TOML config file; the [train] table overrides training defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from this checkpoint instead of initializing fresh. The
    /// run's original config is restored, so no config flags apply.
    #[arg(long, conflicts_with_all = ["config", "seed"])]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input mesh.
    #[arg(long)]
    mesh: PathBuf,
    /// Jaw side: maxillary/upper or mandible/lower.
    #[arg(long)]
    jaw: String,
    /// Output prefix; writes PREFIX.labels, PREFIX_colored.obj,
    /// PREFIX_result.json and optionally PREFIX_probs.csv.
    #[arg(long)]
    out_prefix: PathBuf,
    /// Points per network pass.
    #[arg(long, default_value_t = 10_000)]
    n_points: usize,
    /// Seed for the face cover.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write averaged class probabilities as CSV.
    #[arg(long)]
    probs: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted label file (one class id per line).
    #[arg(long, requires = "truth", conflicts_with_all = ["checkpoint", "data"])]
    pred: Option<PathBuf>,
    /// Ground-truth label file.
    #[arg(long, requires = "pred")]
    truth: Option<PathBuf>,
    /// Checkpoint to evaluate over a dataset directory.
    #[arg(long, requires = "data")]
    checkpoint: Option<PathBuf>,
    /// Dataset directory with ground truth.
    #[arg(long, requires = "checkpoint")]
    data: Option<PathBuf>,
    /// Points per network pass during evaluation.
    #[arg(long, default_value_t = 10_000)]
    n_points: usize,
    /// Seed for the face cover.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the full report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Dataset directory with a manifest.json.
    #[arg(long)]
    data: PathBuf,
    /// Epochs per arm.
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Master seed shared by all arms.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// TOML config file; the [train] table overrides the shared recipe.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the comparison as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default()
            .default_filter_or(if cli.verbose { "info" } else { "warn" }),
    )
    .init();

    let (name, result) = match cli.command {
        Command::Features(args) => ("features", commands::features(args)),
        Command::Curvature(args) => ("curvature", commands::curvature(args)),
        Command::Synth(args) => ("synth", commands::synth(args)),
        Command::Train(args) => ("train", commands::train(args)),
        Command::Infer(args) => ("infer", commands::infer(args)),
        Command::Eval(args) => ("eval", commands::eval(args)),
        Command::CompareCurvatures(args) => {
            ("compare-curvatures", commands::compare_curvatures(args))
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::json!({ "command": name, "error": err.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}
