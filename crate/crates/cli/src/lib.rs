//! Batch front end: `simulate`, `estimate`, `crossval`, `summarize` and
//! `dp-demo`, each driven by an optional JSON [`RunConfig`] with flag
//! overrides.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 non-convergence
//! (artifacts are still written), 1 anything else.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpmnl::mnl::UtilitySpace;
use dpmnl::simgen::ExperimentId;

pub mod commands;
pub mod config;

pub use config::RunConfig;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DPMNL_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "dpmnl-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    /// Outputs were written but some fit did not converge.
    NonConvergence(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::NonConvergence(m) => write!(f, "not converged: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<dpmnl::Error> for CliError {
    fn from(e: dpmnl::Error) -> Self {
        use dpmnl::Error as E;
        match e {
            E::Io { .. }
            | E::Csv(_)
            | E::Json(_)
            | E::MissingColumn(_)
            | E::NonNumeric { .. }
            | E::ChosenUnavailable { .. }
            | E::DuplicateAlternative { .. }
            | E::InvalidData(_)
            | E::DegenerateLikelihood(_) => CliError::Data(e.to_string()),
            E::TooManyFolds { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dpmnl", version)]
#[command(about = "Dirichlet process mixture MNL estimation, baselines and simulation")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $DPMNL_OUT_DIR, else ./dpmnl-out).
    #[arg(long, short = 'o', global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate one of the Monte Carlo experiments.
    Simulate(SimulateArgs),
    /// Fit an MNL, LC-MNL (single K or a K sweep) or DPM-MNL model.
    Estimate(EstimateArgs),
    /// K-fold cross-validated predictive log-likelihood.
    Crossval(CrossvalArgs),
    /// Implicit-value percentiles, ECDFs and kernel densities of a fitted mixture.
    Summarize(SummarizeArgs),
    /// Histograms of truncated stick-breaking DP draws with a N(0,1) base.
    DpDemo(DpDemoArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_experiment)]
    pub experiment: Option<ExperimentId>,
    /// Individuals.
    #[arg(long)]
    pub n: Option<usize>,
    /// Choice tasks per individual.
    #[arg(long)]
    pub t: Option<usize>,
    /// Alternatives per task.
    #[arg(long)]
    pub j: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Wtp,
    Preference,
}

impl From<SpaceArg> for UtilitySpace {
    fn from(s: SpaceArg) -> Self {
        match s {
            SpaceArg::Wtp => UtilitySpace::Wtp,
            SpaceArg::Preference => UtilitySpace::Preference,
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// Long-format choice CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<config::ModelKind>,
    #[arg(long, value_enum)]
    pub space: Option<SpaceArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub n_starts: Option<usize>,
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Scale of the normal / half-normal base measure.
    #[arg(long)]
    pub prior_scale: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// `mixture.json` written by `estimate`.
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub percentiles: Option<Vec<f64>>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DpDemoArgs {
    #[arg(long = "alpha", value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
}

fn parse_experiment(s: &str) -> Result<ExperimentId, String> {
    s.parse().map_err(|e: dpmnl::Error| e.to_string())
}

/// Parses `args` (including the program name) and runs the command, returning
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a pool of the requested size.
pub fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config::merge(&mut cfg.output_dir, cli.global.out.clone());
    config::merge(&mut cfg.seed, cli.global.seed);
    config::merge(&mut cfg.threads, cli.global.threads);
    let out = cfg
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Failure(format!("cannot start worker pool: {e}")))?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", out.display())))?;
    pool.install(|| commands::dispatch(cli.command, cfg, &out))?;
    Ok(out)
}
