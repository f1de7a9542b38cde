//! `stainkit`: stain deconvolution, virtual HES restaining, registration and
//! Saffron evaluation from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;
mod files;
mod manifest;
mod par;
mod pipeline;
mod report;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "stainkit", version, about = "Stain deconvolution and virtual HES restaining toolkit")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Worker threads for tile-level parallelism (0 = all cores).
    #[arg(long, global = true, env = "STAINKIT_JOBS", default_value_t = 1)]
    pub jobs: usize,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Global {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic HE/HES tile pairs with known ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Estimate a stain matrix by sparse NMF on tissue pixels of a set of tiles.
    EstimateMatrix {
        /// Image files or directories of images.
        #[arg(long, required = true, num_args = 1..)]
        tiles: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        stains: usize,
        #[arg(long, default_value_t = stainkit_core::stain::SnmfConfig::<f64>::new(3).sparsity_lambda)]
        lambda: f64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = stainkit_core::stain::DEFAULT_SAMPLE_SIZE)]
        sample_size: usize,
        /// Start from random columns instead of the reference stains.
        #[arg(long)]
        random_init: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-pixel stain densities of an image.
    Deconvolve {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        /// pinv or nnls.
        #[arg(long, default_value = "pinv")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Divide a concentration map by its per-stain 99th percentile.
    Normalize {
        #[arg(long)]
        cmap: PathBuf,
        /// Image the map came from; restricts the percentile to its tissue pixels.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized Saffron density of an HES tile.
    ExtractSaffron {
        #[arg(long)]
        hes: PathBuf,
        /// Three-stain matrix; its p99 entry, when present, is used as the scale.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a virtual HES tile from an HE tile and a Saffron map.
    Reconstruct {
        #[arg(long)]
        he: PathBuf,
        #[arg(long)]
        saffron: PathBuf,
        #[arg(long)]
        matrix_he: PathBuf,
        /// Matrix holding the Saffron column.
        #[arg(long)]
        matrix_s: PathBuf,
        #[arg(long, default_value_t = stainkit_core::reconstruct::DEFAULT_EPSILON)]
        epsilon: f64,
        /// Compare Saffron and Eosin in raw OD instead of normalized units.
        #[arg(long)]
        raw_compare: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register a moving tile onto a fixed tile.
    Register {
        #[arg(long)]
        fixed: PathBuf,
        #[arg(long)]
        moving: PathBuf,
        #[arg(long, default_value_t = stainkit_core::registration::DEFAULT_ANGLE_RANGE)]
        angle_range: f64,
        #[arg(long, default_value_t = stainkit_core::registration::DEFAULT_ANGLE_STEP)]
        angle_step: f64,
        #[arg(long, default_value_t = stainkit_core::registration::DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = stainkit_core::registration::DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the linear Saffron baseline on the train split of a pair manifest.
    FitBaseline {
        #[arg(long)]
        manifest: PathBuf,
        /// Three-stain HES matrix used to extract the Saffron targets.
        #[arg(long)]
        matrix_hes: PathBuf,
        #[arg(long, default_value_t = stainkit_core::predictor::DEFAULT_WINDOW)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a Saffron map from an HE tile.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        he: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics over a manifest of prediction / ground-truth map pairs.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Split every map into an N x N grid of regions for the regression.
        #[arg(long, default_value_t = 1)]
        region_grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Registration, extraction, fit, prediction, reconstruction and evaluation
    /// over a pair manifest.
    Pipeline(pipeline::PipelineArgs),
}

/// Bad invocation that clap cannot catch (exit 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Synth { spec, out_dir } => synth::run(&g, &spec, &out_dir),
        Command::EstimateMatrix { tiles, stains, lambda, max_iters, tol, sample_size, random_init, out } => {
            commands::estimate_matrix(
                &g,
                &commands::EstimateArgs { tiles, stains, lambda, max_iters, tol, sample_size, random_init },
                &out,
            )
        }
        Command::Deconvolve { image, matrix, mode, out } => commands::deconvolve(&image, &matrix, &mode, &out),
        Command::Normalize { cmap, image, out } => commands::normalize(&cmap, image.as_deref(), &out),
        Command::ExtractSaffron { hes, matrix, out } => commands::extract_saffron(&hes, &matrix, &out),
        Command::Reconstruct { he, saffron, matrix_he, matrix_s, epsilon, raw_compare, out } => {
            commands::reconstruct(&he, &saffron, &matrix_he, &matrix_s, epsilon, raw_compare, &out)
        }
        Command::Register { fixed, moving, angle_range, angle_step, levels, max_iters, out } => {
            commands::register(&fixed, &moving, angle_range, angle_step, levels, max_iters, &out)
        }
        Command::FitBaseline { manifest, matrix_hes, k, out } => {
            commands::fit_baseline(&g, &manifest, &matrix_hes, k, &out)
        }
        Command::Predict { model, he, out } => commands::predict(&model, &he, &out),
        Command::Evaluate { manifest, region_grid, out } => commands::evaluate(&manifest, region_grid, &out),
        Command::Pipeline(args) => pipeline::run(&g, &args),
    }
}

/// A finished invocation that did not succeed.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

/// Parses `argv` (program name first) and runs the subcommand. Help and version
/// requests succeed after printing; everything else maps to exit code 1 (usage)
/// or 2 (data).
pub fn run<I, S>(argv: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    Ok(())
                }
                _ => Err(Failure { code: 1, message: e.render().to_string().trim_end().to_string() }),
            };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    dispatch(cli).map_err(|e| Failure {
        code: if e.downcast_ref::<UsageError>().is_some() { 1 } else { 2 },
        message: format!("error: {e:#}"),
    })
}

fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
