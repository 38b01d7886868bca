//! Command-line surface. The binary only forwards `std::env::args` here.
//!
//! Exit codes: 0 success, 2 bad flags, 3 file system, 4 malformed input
//! data, 5 invalid configuration, 6 not enough tissue to estimate stains,
//! 1 anything else.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{parse_manifest, read_detections, write_detections};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_MATCH_RADIUS;
use crate::io::{load_image, save_image};
use crate::pipeline::{
    detect_dataset, evaluate_dataset, PredictorSpec, RunConfig, SyntheticDataset,
};
use crate::postproc::{Connectivity, PostprocConfig};
use crate::stain::{estimate_stains, perturb, sample_perturbation, VahadaneParams};
use crate::tiling::{plan_tiles, TilingConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_CONFIG: i32 = 5;
pub const EXIT_TISSUE: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "mitoseg", version, about = "Mitosis detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict and post-process every slide of a manifest.
    Detect(DetectArgs),
    /// Match detections against the manifest and report F1 per domain.
    Eval(EvalArgs),
    /// Stain-perturb one image.
    Augment(AugmentArgs),
    /// Print tile origins as `x y` lines.
    TilePlan(TilePlanArgs),
    /// Write a synthetic point-annotated dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TilingArgs {
    #[arg(long, default_value_t = 512)]
    pub tile_size: usize,
    #[arg(long, default_value_t = 0.8)]
    pub overlap: f64,
}

impl TilingArgs {
    fn config(&self) -> Result<TilingConfig> {
        TilingConfig::new(self.tile_size, self.overlap)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Repeat to ensemble: constant:P, oracle[:R], network:PATH[:desk], random[:desk].
    #[arg(long = "predictor", required = true)]
    pub predictors: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tiling: TilingArgs,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 15)]
    pub dilation_radius: usize,
    #[arg(long, default_value_t = 20)]
    pub min_area: usize,
    /// 4 or 8.
    #[arg(long, default_value_t = 8)]
    pub connectivity: u8,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MATCH_RADIUS)]
    pub radius: f64,
    /// Metrics JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub sigma_alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    pub sigma_beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.15)]
    pub od_threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TilePlanArgs {
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    #[command(flatten)]
    pub tiling: TilingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory; receives manifest.json and the slide images.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub slides: usize,
    #[arg(long, default_value_t = 3)]
    pub domains: usize,
    #[arg(long, default_value_t = 2048)]
    pub size: usize,
    #[arg(long, default_value_t = 20)]
    pub annotations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run_detect(args: &DetectArgs) -> Result<usize> {
    let ensemble = args
        .predictors
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<PredictorSpec>>>()?;
    let connectivity = Connectivity::try_from(args.connectivity)?;
    let cfg = RunConfig {
        tiling: args.tiling.config()?,
        postproc: PostprocConfig {
            binarize_threshold: args.threshold,
            dilation_radius: args.dilation_radius,
            connectivity,
            min_component_area: args.min_area,
        },
        seed: args.seed,
        ensemble,
        ..RunConfig::default()
    };
    cfg.validate()?;
    let manifest = parse_manifest(&args.manifest)?;
    let detections = detect_dataset(&manifest, &cfg)?;
    write_detections(&detections, &args.out)?;
    Ok(detections.len())
}

pub fn run_eval(args: &EvalArgs) -> Result<String> {
    if !(args.radius >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "radius must be >= 0, got {}",
            args.radius
        )));
    }
    let manifest = parse_manifest(&args.manifest)?;
    let detections = read_detections(&args.detections)?;
    let report = evaluate_dataset(&detections, &manifest, args.radius)?;
    fs::write(&args.out, report.to_json() + "\n").map_err(|e| Error::io(&args.out, e))?;
    Ok(report.render())
}

pub fn run_augment(args: &AugmentArgs) -> Result<()> {
    let pert = sample_perturbation(args.seed, args.sigma_alpha, args.sigma_beta)?;
    let params = VahadaneParams {
        sparsity_lambda: args.lambda,
        od_threshold: args.od_threshold,
        seed: args.seed,
        ..VahadaneParams::default()
    };
    let image = load_image(&args.input)?;
    let est = estimate_stains(&image, &params)?;
    let out = perturb(
        &image,
        &est.stains,
        &est.concentrations,
        &pert,
        params.white_point,
    )?;
    save_image(&out, &args.out)
}

pub fn run_tile_plan(args: &TilePlanArgs) -> Result<String> {
    let grid = plan_tiles(args.height, args.width, &args.tiling.config()?)?;
    Ok(grid
        .origins()
        .iter()
        .map(|(x, y)| format!("{x} {y}\n"))
        .collect())
}

pub fn run_synth(args: &SynthArgs) -> Result<usize> {
    let spec = SyntheticDataset {
        slides: args.slides,
        domains: args.domains,
        height: args.size,
        width: args.size,
        annotations_per_slide: args.annotations,
        seed: args.seed,
        ..SyntheticDataset::default()
    };
    Ok(spec.write(&args.out)?.slides.len())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::MalformedHeader { .. }
        | Error::UnsupportedDepth { .. }
        | Error::ManifestSchema { .. }
        | Error::DuplicateSlideId(_)
        | Error::AnnotationOutOfBounds { .. }
        | Error::DetectionsFormat { .. }
        | Error::WeightFormat { .. }
        | Error::WeightShape { .. } => EXIT_DATA,
        Error::InvalidConfig(_) => EXIT_CONFIG,
        Error::InsufficientTissue { .. } => EXIT_TISSUE,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    let print = |out: &mut std::io::StdoutLock, text: &str| {
        out.write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    };
    match &cli.command {
        Command::Detect(a) => {
            let n = run_detect(a)?;
            eprintln!("wrote {n} detections to {}", a.out.display());
        }
        Command::Eval(a) => print(&mut stdout, &run_eval(a)?)?,
        Command::Augment(a) => run_augment(a)?,
        Command::TilePlan(a) => print(&mut stdout, &run_tile_plan(a)?)?,
        Command::Synth(a) => {
            let n = run_synth(a)?;
            eprintln!("wrote {n} slides to {}", a.out.display());
        }
    }
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
