//! `lmcorr`: landmark correlation analysis from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical or degenerate data,
//! 4 search time limit reached (the best selection found is still written).

mod commands;
mod output;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lmcorr_core::{EyeConvention, InputFormat, Method, DEFAULT_RIDGE};

#[derive(Debug, Parser)]
#[command(
    name = "lmcorr",
    version,
    about = "Landmark correlation analysis and sparse landmark format search"
)]
pub struct Cli {
    /// Seed for image subsampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Relative ridge added to each auto-covariance block.
    #[arg(long, global = true, default_value_t = DEFAULT_RIDGE)]
    pub ridge: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse annotations and write the canonical JSON dataset.
    Ingest(IngestArgs),
    /// Compute the landmark affinity matrix of a dataset.
    Affinity(AffinityArgs),
    /// Affinity matrix error of predictions against ground truth.
    Ame(AmeArgs),
    /// Elementwise standard deviation over several affinity matrices.
    Std(StdArgs),
    /// Normalized mean error of predictions, in percent.
    Nme(NmeArgs),
    /// Select a sparse landmark subset maximizing the coverage value.
    Search(SearchArgs),
    /// Coverage value versus budget over repeated image subsamples.
    Sweep(SweepArgs),
    /// Re-render a figure from its CSV twin or a matrix file.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Directory of .pts files, WFLW annotation file or canonical JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Input syntax.
    #[arg(long, default_value = "auto", value_parser = parse_input_format)]
    pub format: InputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    /// Landmark scheme: auto, 300w, wflw or generic.
    #[arg(long, default_value = "auto")]
    pub scheme: String,
    /// Eye reference points: outer-corners or centroids.
    #[arg(long, default_value = "outer-corners", value_parser = parse_eyes)]
    pub eyes: EyeConvention,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Canonical JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    /// SVG figure; a CSV twin is written next to it.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Label heatmap axes from 1 instead of 0.
    #[arg(long)]
    pub one_based_labels: bool,
}

#[derive(Debug, Args)]
pub struct AffinityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Matrix output (.csv or .json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub figure: FigureArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Per component-block-pair statistics as CSV.
    #[arg(long)]
    pub blocks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AmeArgs {
    /// Predicted landmarks.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth landmarks.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "auto", value_parser = parse_input_format)]
    pub format: InputFormat,
    /// Matrix output (.csv or .json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub figure: FigureArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Per component-block-pair statistics as CSV.
    #[arg(long)]
    pub blocks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StdArgs {
    /// Affinity matrix files (.csv/.json) or landmark datasets, in order.
    #[arg(long, num_args = 2.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "auto", value_parser = parse_input_format)]
    pub format: InputFormat,
    /// Matrix output (.csv or .json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub figure: FigureArgs,
}

#[derive(Debug, Args)]
pub struct NmeArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "auto", value_parser = parse_input_format)]
    pub format: InputFormat,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// exact, greedy or auto (exact up to 100 landmarks).
    #[arg(long, default_value = "auto", value_parser = parse_method)]
    pub method: Method,
    /// Time limit in seconds for each exact search.
    #[arg(long)]
    pub time_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Landmark dataset, or an affinity matrix (.csv/.json) with --matrix.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "auto", value_parser = parse_input_format)]
    pub format: InputFormat,
    /// Treat the input as an affinity matrix file.
    #[arg(long)]
    pub matrix: bool,
    /// Number of landmarks to select.
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Fraction of images used (seeded by --seed).
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    /// Selection JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare against an existing subset: a preset name (mafl, lfw, aflw,
    /// cofw) or comma-separated indices.
    #[arg(long)]
    pub compare: Option<String>,
    #[command(flatten)]
    pub figure: FigureArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Budget range `lo:hi`, inclusive.
    #[arg(long)]
    pub m_range: String,
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Curve CSV output (m,mean,var).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG curve; a CSV twin is written next to it.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// affinity, ame, std, curve or overlay.
    #[arg(long)]
    pub kind: String,
    /// Matrix file, sweep CSV or overlay CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// SVG output; a CSV twin is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub one_based_labels: bool,
    #[arg(long)]
    pub title: Option<String>,
}

fn parse_input_format(s: &str) -> Result<InputFormat, String> {
    s.parse().map_err(|e: lmcorr_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: lmcorr_core::Error| e.to_string())
}

fn parse_eyes(s: &str) -> Result<EyeConvention, String> {
    match s {
        "outer-corners" | "corners" => Ok(EyeConvention::OuterCorners),
        "centroids" | "centers" => Ok(EyeConvention::Centroids),
        other => Err(format!("unknown eye convention '{other}' (outer-corners, centroids)")),
    }
}

/// Errors surfaced to the user, mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Core(lmcorr_core::Error),
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
}

impl From<lmcorr_core::Error> for CliError {
    fn from(e: lmcorr_core::Error) -> Self {
        Self::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Core(e) => write!(f, "{e}"),
            Self::Usage(msg) => write!(f, "{msg}"),
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

/// Exit status of a completed command.
pub enum Outcome {
    Done,
    TimeLimit,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::TimeLimit) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
