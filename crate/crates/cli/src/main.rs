//! `cardioshape` command-line tool.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cardioshape",
    version,
    about = "Anatomical plausibility scores for cardiac segmentation masks"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Output directory.
    #[arg(long, global = true, env = "CARDIOSHAPE_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Label values per structure, e.g. `endo=1,myo=2,la=3`. LV-epi is the
    /// union of endo and myo; `la=` skips the atrium.
    #[arg(long, global = true, default_value = "endo=1,myo=2,la=3")]
    pub labels: String,
    /// Threshold file; built-in expert thresholds otherwise.
    #[arg(long, global = true)]
    pub thresholds: Option<PathBuf>,
    /// Flag images whose Hausdorff distance exceeds this many mm as
    /// geometrical outliers.
    #[arg(long, global = true)]
    pub geo_hd_max: Option<f64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Abort on the first unreadable mask (default for calibrate).
    #[arg(long, global = true, overrides_with = "lenient")]
    pub strict: bool,
    /// Record unreadable masks as failures and continue (default for
    /// evaluate).
    #[arg(long, global = true, overrides_with = "strict")]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Md,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive thresholds from expert masks listed one per manifest line.
    Calibrate { manifest: PathBuf },
    /// Score prediction/reference pairs listed in a tab-separated manifest.
    Evaluate {
        manifest: PathBuf,
        /// Method name used in reports.
        #[arg(long, default_value = "prediction")]
        method: String,
    },
    /// Recompute verdicts of a stored run under other thresholds.
    Classify { run: PathBuf },
    /// Write a synthetic mask.
    Synth(SynthArgs),
    /// Score a shape over increasing deformity magnitudes.
    Sweep(SweepArgs),
    /// Summarize one or more stored runs side by side.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Disk,
    Square,
    Ellipse,
    Bridge,
    Blob,
    /// Cavity, wall and atrium with labels 1, 2 and 3.
    Phantom,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DeformityArg {
    Spike,
    Notch,
    Neck,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub semi_x: Option<f64>,
    #[arg(long)]
    pub semi_y: Option<f64>,
    #[arg(long)]
    pub inner: Option<f64>,
    #[arg(long)]
    pub outer: Option<f64>,
    /// Bridge opening in degrees.
    #[arg(long, default_value_t = 270.0)]
    pub span: f64,
    /// Phantom wall thickness in pixels.
    #[arg(long, default_value_t = 12.0)]
    pub wall: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Pixel spacing in mm.
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    /// Deformity angle in degrees.
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub shape: ShapeArg,
    #[command(flatten)]
    pub shape_args: ShapeArgs,
    #[arg(long, value_enum)]
    pub deformity: Option<DeformityArg>,
    #[arg(long, default_value_t = 0.0)]
    pub magnitude: f64,
    /// Output mask (.mhd, .mha or .pgm); `<out>/<shape>.mha` otherwise.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value_t = ShapeArg::Blob)]
    pub shape: ShapeArg,
    #[command(flatten)]
    pub shape_args: ShapeArgs,
    #[arg(long, value_enum)]
    pub deformity: DeformityArg,
    /// Comma-separated, ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    pub magnitudes: Vec<f64>,
    /// CSV destination; standard output otherwise.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Calibrate { manifest } => commands::calibrate(g, &manifest),
        Command::Evaluate { manifest, method } => commands::evaluate(g, &manifest, &method),
        Command::Classify { run } => commands::classify(g, &run),
        Command::Synth(args) => commands::synth(g, &args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Report { runs } => commands::report(g, &runs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
