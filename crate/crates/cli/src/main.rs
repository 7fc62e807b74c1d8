//! `centroid`: synthesize data, encode targets, train, predict and evaluate.
//!
//! Exit status is 0 on success, 2 for invalid input or arguments and 3 for
//! internal failures.

mod commands;
mod config;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "centroid", version, about = "Centroid detection with Gaussian heatmap regression")]
struct Cli {
    /// JSON run configuration; flags override its keys
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset (PNG images, CSV labels, manifest)
    Synth(SynthArgs),
    /// Render a points file as a heatmap (PNG preview and CHM1 raw grid)
    Encode(EncodeArgs),
    /// Train a model on the train split of a manifest
    Train(TrainArgs),
    /// Detect centroids in one image or in a manifest split
    Predict(PredictArgs),
    /// Score predicted points against ground truth
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory [default: synth]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Random seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of images [default: 80]
    #[arg(long)]
    pub images: Option<usize>,
    /// Square image side in pixels [default: 128]
    #[arg(long)]
    pub size: Option<usize>,
    /// Fewest disks per image [default: 3]
    #[arg(long)]
    pub blobs_min: Option<usize>,
    /// Most disks per image [default: 10]
    #[arg(long)]
    pub blobs_max: Option<usize>,
    /// Smallest disk radius in pixels [default: 4]
    #[arg(long)]
    pub radius_min: Option<f64>,
    /// Largest disk radius in pixels [default: 8]
    #[arg(long)]
    pub radius_max: Option<f64>,
    /// Minimum distance between disk centers [default: 24]
    #[arg(long)]
    pub min_separation: Option<f64>,
    /// Train, val and test fractions [default: 0.8,0,0.2]
    #[arg(long, value_parser = parse_fractions, value_name = "T,V,S")]
    pub split: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Points file (CSV "x,y" or GeoJSON)
    #[arg(long, value_name = "FILE")]
    pub points: PathBuf,
    /// Heatmap width in pixels
    #[arg(long)]
    pub width: usize,
    /// Heatmap height in pixels
    #[arg(long)]
    pub height: usize,
    /// Output PNG preview
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Output CHM1 grid [default: the PNG path with extension .chm1]
    #[arg(long, value_name = "FILE")]
    pub raw: Option<PathBuf>,
    /// Kernel standard deviation in pixels [default: 10]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Kernel support as a multiple of sigma [default: 3]
    #[arg(long)]
    pub truncation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Output directory for checkpoints and history [default: run]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Training epochs [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Kernel standard deviation in pixels [default: 10]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Kernel support as a multiple of sigma [default: 3]
    #[arg(long)]
    pub truncation: Option<f64>,
    /// Encoder levels [default: 3]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Channels at the first level [default: 8]
    #[arg(long)]
    pub base_channels: Option<usize>,
    /// Bottleneck dropout rate [default: 0.2]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Seed for initialization, shuffling and dropout [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress per-epoch progress lines
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Single input image (8-bit RGB PNG)
    #[arg(long, value_name = "FILE", conflicts_with = "manifest")]
    pub image: Option<PathBuf>,
    /// Predict every image of a manifest split instead
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Manifest split to predict [default: test]
    #[arg(long)]
    pub split: Option<String>,
    /// Output directory [default: predictions]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Peak threshold in (0, 1) [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Peak suppression half-window in pixels [default: round(sigma)]
    #[arg(long)]
    pub min_distance: Option<usize>,
    /// Run the whole image in one pass
    #[arg(long)]
    pub no_tiling: bool,
    /// Tile side in pixels [default: training tile size]
    #[arg(long)]
    pub tile_size: Option<usize>,
    /// Tile overlap in pixels [default: 2 x kernel support]
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Merge radius for duplicate peaks across tiles [default: sigma]
    #[arg(long)]
    pub dedupe_radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted points file (CSV or GeoJSON)
    #[arg(long, value_name = "FILE", requires = "gt", conflicts_with = "manifest")]
    pub pred: Option<PathBuf>,
    /// Ground-truth points file (CSV or GeoJSON)
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
    /// Evaluate a manifest split against predictions in --pred-dir
    #[arg(long, value_name = "FILE", requires = "pred_dir")]
    pub manifest: Option<PathBuf>,
    /// Directory holding <image stem>.csv predictions
    #[arg(long, value_name = "DIR")]
    pub pred_dir: Option<PathBuf>,
    /// Manifest split to evaluate [default: test]
    #[arg(long)]
    pub split: Option<String>,
    /// Match radius in pixels [default: sigma, 10]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Also write the metrics JSON here
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn parse_fractions(s: &str) -> Result<[f64; 3], String> {
    let v = s
        .split(',')
        .map(|f| f.trim().parse::<f64>().map_err(|e| format!("{f:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 3 comma-separated fractions, got {}", v.len()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<centroid_core::Error>() {
        Some(centroid_core::Error::Internal(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::RunConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Synth(a) => commands::synth(&a, &cfg),
        Command::Encode(a) => commands::encode(&a, &cfg),
        Command::Train(a) => commands::train(&a, &cfg),
        Command::Predict(a) => commands::predict(&a, &cfg),
        Command::Evaluate(a) => commands::evaluate(&a, &cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
