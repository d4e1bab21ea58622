//! `embodied-depth`: batch computation, evaluation and description of
//! embodied depth maps.

mod compute;
mod config;
mod describe;
mod evaluate;
mod files;
mod report;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use embodied_depth::camera::DepthMode;
use embodied_depth::language::Aggregation;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "embodied-depth", version, about = "Ground-plane depth priors from calibration and segmentation")]
pub struct Cli {
    /// Run configuration document (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-frame work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Abort the batch at the first failing frame.
    #[arg(long, global = true)]
    strict: bool,
    /// Depth output encoding.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Png16,
    F32,
    Both,
}

impl OutputFormat {
    pub fn png(self) -> bool {
        matches!(self, OutputFormat::Png16 | OutputFormat::Both)
    }

    pub fn f32(self) -> bool {
        matches!(self, OutputFormat::F32 | OutputFormat::Both)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Generic,
    Kitti,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Euclidean,
    ZDepth,
}

impl From<ModeArg> for DepthMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Euclidean => DepthMode::Euclidean,
            ModeArg::ZDepth => DepthMode::ZDepth,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AggregationArg {
    Median,
    Mean,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Median => Aggregation::Median,
            AggregationArg::Mean => Aggregation::Mean,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the five-stage pipeline over a directory of segmentation maps.
    Compute(ComputeArgs),
    /// Score predicted depth maps against ground truth.
    Evaluate(EvaluateArgs),
    /// Turn a scene depth map and instance map into depth sentences.
    Describe(DescribeArgs),
    /// Write a synthetic fixture (segmentation, instances, depth, camera).
    Synth(SynthArgs),
    /// Render an evaluation JSON as a text table and CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct ComputeArgs {
    /// Camera configuration (TOML).
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Class table (TOML); defaults to the Cityscapes taxonomy.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    pub seg_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated stages to write (default: all five).
    #[arg(long, value_delimiter = ',')]
    pub stages: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub depth_mode: Option<ModeArg>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long, value_enum)]
    pub dataset: Option<Dataset>,
    /// `calib_cam_to_cam.txt` for `--dataset kitti`.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Camera height above the road for `--dataset kitti`.
    #[arg(long)]
    pub camera_height: Option<f64>,
    /// Re-run with the inputs and options recorded in a previous manifest.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Segmentation maps for the road / ground / scene breakdown.
    #[arg(long)]
    pub seg_dir: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    pub min_depth: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<f64>,
    /// Restrict metrics to the Garg crop.
    #[arg(long)]
    pub crop: bool,
    /// Rescale predictions by the median ratio before scoring.
    #[arg(long)]
    pub median_scaling: bool,
    /// Group frames by their `YYYY-MM-DD` / `YYYY_MM_DD` filename prefix.
    #[arg(long)]
    pub by_date: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DescribeArgs {
    /// Scene-stage depth map (`.png` or `.f32`).
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[arg(long)]
    pub seg: PathBuf,
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// One caption sentence per line.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub min_pixels: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Directory for `combined.txt` and `combined.json`; stdout otherwise.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Fixture name, or `all`.
    #[arg(long)]
    pub fixture: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// JSON written by `evaluate`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_text: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

/// A problem with how the tool was invoked (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub struct Global {
    pub config: RunConfig,
    pub strict: bool,
    pub format: OutputFormat,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let format = cli.format.or(config.format).unwrap_or(OutputFormat::Both);
    let jobs = cli.jobs.or(config.jobs);
    if let Some(n) = jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let global = Global {
        config,
        strict: cli.strict,
        format,
    };
    match cli.command {
        Command::Compute(a) => compute::run(&global, a),
        Command::Evaluate(a) => evaluate::run(&global, a),
        Command::Describe(a) => describe::run(&global, a).map(|()| true),
        Command::Synth(a) => synth::run(a).map(|()| true),
        Command::Report(a) => report::run(a).map(|()| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
