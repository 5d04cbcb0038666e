//! The `obbox` command line: scene generation, simulated detections,
//! default-box clustering, target encoding, evaluation and a benchmark.
//!
//! Exit codes: 0 success, 1 internal failure, 2 bad input.

mod commands;
pub mod formats;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{bench_iou_oriented, BenchResult, BENCH_FLOOR, BENCH_TARGET};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;

/// A command failure with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn bad(message: impl Into<String>) -> Self {
        Failure { code: EXIT_BAD_INPUT, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INTERNAL, message: message.into() }
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::bad(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::internal(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "obbox", version, about = "Oriented box detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotation file from a scene spec.
    Generate(GenerateArgs),
    /// Turn annotations into simulated detector output.
    Simulate(SimulateArgs),
    /// Cluster box shapes into default boxes and compare with a baseline.
    Cluster(ClusterArgs),
    /// Match ground truth to default boxes and write regression targets.
    Encode(EncodeArgs),
    /// Score predictions against annotations.
    Evaluate(EvaluateArgs),
    /// Measure single-threaded rotated IOU throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// One box per target.
    #[value(name = "A", alias = "a")]
    A,
    /// Long targets split into near-square parts.
    #[value(name = "B", alias = "b")]
    B,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scene spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output annotation file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write one PPM raster per image into this directory.
    #[arg(long)]
    pub raster_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Probability of dropping each object.
    #[arg(long, default_value_t = 0.0)]
    pub drop: f64,
    /// Relative perturbation of centre and sides.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Constant score, or `LOW,HIGH` for uniform scores.
    #[arg(long, default_value = "1")]
    pub score: String,
    /// Emit three-term codes instead of rectangles.
    #[arg(long)]
    pub codes: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Number of default-box shapes.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::anchors::DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Where to write the centroid model (JSON).
    #[arg(long)]
    pub centroids: PathBuf,
    /// Hand-picked shapes to compare against: a JSON list of `[w, h]`
    /// normalized sizes. Defaults to the SSD-style set.
    #[arg(long, conflicts_with = "no_baseline")]
    pub baseline: Option<PathBuf>,
    /// Skip the baseline row.
    #[arg(long)]
    pub no_baseline: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::A)]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub centroids: PathBuf,
    /// Feature-map grids, e.g. `38x38,19x19` or `10,5`.
    #[arg(long, default_value = "38,19,10,5,3,1")]
    pub grids: String,
    #[arg(long, value_enum, default_value_t = ModeArg::A)]
    pub mode: ModeArg,
    /// Relative crop jitter applied to training targets (below 0.5).
    #[arg(long, default_value_t = crate::encoding::DEFAULT_JITTER)]
    pub jitter: f64,
    /// Hard negatives kept per positive.
    #[arg(long, default_value_t = crate::encoding::DEFAULT_NEGATIVE_RATIO)]
    pub ratio: f64,
    /// Minimum IOU for a match beyond each object's best default box.
    #[arg(long, default_value_t = crate::encoding::DEFAULT_MATCH_THRESHOLD)]
    pub threshold: f64,
    /// Emit `(d1, d2)` codes instead of `(d1, d2, h)`.
    #[arg(long)]
    pub two_term: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Confidence filter applied before NMS.
    #[arg(long, default_value_t = crate::metrics::DEFAULT_CONFIDENCE)]
    pub conf: f64,
    /// IOU needed for a true positive.
    #[arg(long, default_value_t = crate::metrics::DEFAULT_EVAL_IOU)]
    pub iou: f64,
    /// Axis IOU above which NMS suppresses a detection.
    #[arg(long, default_value_t = crate::metrics::DEFAULT_NMS_IOU)]
    pub nms: f64,
    /// Match on rotated boxes and report mRIOU.
    #[arg(long)]
    pub rbox: bool,
    /// Use 11-point interpolated AP.
    #[arg(long)]
    pub eleven_point: bool,
    /// Text report destination.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Structured rows destination (JSON).
    #[arg(long)]
    pub rows: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Box pairs cycled through while timing.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Minimum measuring time.
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (program name first) and runs the command. Normal output
/// goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_BAD_INPUT;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
        Command::Cluster(a) => commands::cluster(a, out),
        Command::Encode(a) => commands::encode(a, out),
        Command::Evaluate(a) => commands::evaluate(a, out),
        Command::Bench(a) => commands::bench(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
