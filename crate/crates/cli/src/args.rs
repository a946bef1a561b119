use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use seco_inr::sampling::Resample;

/// Fit, super-resolve, evaluate and benchmark semantically conditioned INRs.
///
/// Every command writes into a fresh timestamped directory under the output
/// root and prints that directory on success.
#[derive(Debug, Parser)]
#[command(name = "seco-inr", version)]
pub struct Cli {
    /// Output root. Overrides SECO_INR_OUTPUT_DIR and the config's `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on one image and save its checkpoint.
    Fit(FitArgs),
    /// Render a fitted model on a denser grid.
    Superres(SuperresArgs),
    /// Score a reconstruction against a reference image.
    Eval(EvalArgs),
    /// Compare seco against seco_no_semantic on a ground-truth image.
    Ablate(ConfigArgs),
    /// Render a synthetic phantom with its segmentation.
    PhantomGen(PhantomArgs),
    /// Measure wall-clock time until each model reaches a training PSNR.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub run: ConfigArgs,
    /// Suppress progress lines on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct SuperresArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Scale of the output grid relative to the training grid.
    #[arg(long, conflicts_with = "dims", required_unless_present = "dims")]
    pub factor: Option<f64>,
    /// Explicit output size.
    #[arg(long, num_args = 2, value_names = ["H", "W"])]
    pub dims: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub reconstruction: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub reference: PathBuf,
    /// Fixed peak value; defaults to the reference maximum.
    #[arg(long, value_name = "VALUE")]
    pub data_range: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Member of the standard suite (1-5).
    #[arg(long, conflicts_with = "random")]
    pub index: Option<usize>,
    /// Seed for a randomly drawn phantom.
    #[arg(long, value_name = "SEED")]
    pub random: Option<u64>,
    /// Classes of a random phantom, background included.
    #[arg(long, default_value_t = 4, requires = "random")]
    pub classes: usize,
    /// Side of the ground-truth render.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Downsampling factor for the training image.
    #[arg(long, default_value_t = 2.0)]
    pub factor: f64,
    /// Downsampling filter: box or bilinear.
    #[arg(long, default_value = "box", value_parser = parse_resample)]
    pub resample: Resample,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: ConfigArgs,
    /// Training PSNR (dB) to time.
    #[arg(long, value_name = "DB")]
    pub psnr_threshold: f64,
}

fn parse_resample(s: &str) -> Result<Resample, String> {
    match s {
        "box" => Ok(Resample::Box),
        "bilinear" => Ok(Resample::Bilinear),
        other => Err(format!("unknown resampling filter {other:?} (expected box or bilinear)")),
    }
}
