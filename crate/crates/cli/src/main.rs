//! `svrf`: build synthetic scenes, train the patch flow and radiance fields,
//! render views and evaluate them.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "svrf", version, about = "Sparse-view radiance field training")]
struct Cli {
    /// Worker threads for rendering; 1 gives single-threaded runs.
    #[arg(long, global = true, env = "SVRF_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a bundled analytic scene into a dataset of input and test views.
    MakeScene(MakeSceneArgs),
    /// Train the colour-patch flow on an image directory or the bundled corpus.
    TrainFlow(TrainFlowArgs),
    /// Fit a radiance field to the input views of a dataset.
    Train(TrainArgs),
    /// Render views of a dataset split from a field checkpoint.
    Render(RenderArgs),
    /// Compare rendered views with the dataset's ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct MakeSceneArgs {
    #[arg(long)]
    pub scene: String,
    #[arg(long, default_value_t = 3)]
    pub inputs: usize,
    #[arg(long, default_value_t = 8)]
    pub tests: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub resolution: u32,
    /// Focal length in pixels.
    #[arg(long, default_value_t = 70.0)]
    pub focal: f64,
    /// Quadrature samples per ray of the ground-truth renderer.
    #[arg(long, default_value_t = 1024)]
    pub n_dense: usize,
}

#[derive(Debug, Args)]
pub struct TrainFlowArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of PNG images to cut patches from.
    #[arg(long, conflicts_with = "bundled_corpus", required_unless_present = "bundled_corpus")]
    pub corpus: Option<PathBuf>,
    /// Use the built-in procedural textures.
    #[arg(long)]
    pub bundled_corpus: bool,
    /// TOML with optional `[flow]` and `[training]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Patch extraction stride in pixels.
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (or its manifest.json).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Flow checkpoint for the colour likelihood term.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    /// TOML training config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Disable depth smoothness.
    #[arg(long)]
    pub no_ds: bool,
    /// Disable the colour likelihood term.
    #[arg(long)]
    pub no_nll: bool,
    /// Disable sample-space annealing.
    #[arg(long)]
    pub no_anneal: bool,
    /// Enable the opacity regularizer with this weight.
    #[arg(long)]
    pub opacity_reg: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop after this many iterations.
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub log_every: Option<u64>,
    /// Skip rendering a test view at every log step.
    #[arg(long)]
    pub no_test_psnr: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: commands::Split,
    /// Samples per ray; defaults to the value the field was trained with.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory of `svrf render`.
    #[arg(long)]
    pub renders: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    match cli.command {
        Command::MakeScene(a) => commands::make_scene(a),
        Command::TrainFlow(a) => commands::train_flow(a),
        Command::Train(a) => commands::train(a),
        Command::Render(a) => commands::render(a),
        Command::Eval(a) => commands::eval(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
