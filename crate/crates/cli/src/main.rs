//! `steel-inspect`: batch front-end over the inspection toolkit.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use steel_inspect::config::load_config;
use steel_inspect::{Error, ErrorKind};

#[derive(Debug, Parser)]
#[command(
    name = "steel-inspect",
    version,
    about = "Steel-surface inspection batch tool"
)]
struct Cli {
    /// TOML run configuration; `STEEL_INSPECT_<KEY>` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-file parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crack detection on one or more images.
    Detect(DetectArgs),
    /// Stitch a capture list into a mosaic.
    Stitch(StitchArgs),
    /// Register a sequence of point clouds.
    Register(RegisterArgs),
    /// Run the edge-avoidance simulator.
    Simulate(SimulateArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Dominant histogram peaks of an image or a count file.
    Peaks(PeaksArgs),
    /// Stitch, detect and locate cracks in world coordinates.
    Survey(SurveyArgs),
    /// Check that the files recorded in a manifest are unchanged.
    VerifyManifest(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Input image(s), PGM or PNG.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Mask path for a single input, output directory for several.
    #[arg(long)]
    pub out: PathBuf,
    /// Report path (single input only; defaults to the mask path with `.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// JSON array of {image_path, odom_x_mm, odom_y_mm, heading_rad}.
    #[arg(long)]
    pub list: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// One cloud per line: `path [x y z yaw]`.
    #[arg(long)]
    pub frames: PathBuf,
    /// Merged cloud, `.xyz` or `.ply`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub poses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// Robot parameters; defaults come from the run configuration.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "method")]
    pub method: String,
    /// `normal` or `low`.
    #[arg(long, default_value = "normal")]
    pub lighting: String,
}

#[derive(Debug, Args)]
pub struct PeaksArgs {
    /// Image, or a text file with one count per level.
    #[arg(long)]
    pub input: PathBuf,
    /// JSON output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SurveyArgs {
    #[arg(long)]
    pub list: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth mask in mosaic coordinates.
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::EmptyResult => 2,
        ErrorKind::Config => 3,
        ErrorKind::Io => 4,
        ErrorKind::Precondition => 5,
    }
}

fn report(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e.kind()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cfg = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return report(&Error::Config(e)),
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => return report(&Error::InvalidInput(format!("worker pool: {e}"))),
    };
    let res = pool.install(|| match &cli.command {
        Command::Detect(a) => commands::detect(a, &cfg),
        Command::Stitch(a) => commands::stitch(a, &cfg),
        Command::Register(a) => commands::register(a, &cfg),
        Command::Simulate(a) => commands::simulate(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::Peaks(a) => commands::peaks(a, &cfg),
        Command::Survey(a) => commands::survey(a, &cfg),
        Command::VerifyManifest(a) => commands::verify_manifest(a),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
