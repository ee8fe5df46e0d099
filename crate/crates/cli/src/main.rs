//! `tpst`: mesh checks, spline fits, predictions and simulation runs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or mesh error, 3 numerical failure.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tpst", version, about = "Penalized trivariate splines on tetrahedral partitions")]
pub struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a mesh and report shape quality as JSON.
    MeshCheck(MeshCheckArgs),
    /// Fit a spline to scattered data.
    Fit(FitArgs),
    /// Evaluate a fitted spline at points.
    Predict(PredictArgs),
    /// Run a seeded simulation experiment.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct MeshCheckArgs {
    pub nodes: PathBuf,
    pub elems: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub index_base: u8,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectArg {
    Gcv,
    Cv,
    Fixed,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub nodes: PathBuf,
    #[arg(long)]
    pub elems: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub index_base: u8,
    /// CSV with columns x,y,z,value.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, default_value_t = 1)]
    pub smoothness: usize,
    #[arg(long, value_enum, default_value_t = SelectArg::Gcv)]
    pub select: SelectArg,
    /// Penalty value for `--select fixed`.
    #[arg(long, required_if_eq("select", "fixed"))]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Multipliers of the automatic scale as lo:hi:count.
    #[arg(long, value_parser = parse_range)]
    pub lambda_grid: Option<(f64, f64, usize)>,
    /// Seed of the block cross-validation fold assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub rank_tol: f64,
    /// Refit with total-variation weights.
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = 2.0, requires = "adaptive")]
    pub tau: f64,
    /// Linear grid of C values as lo:hi:count.
    #[arg(long, value_parser = parse_range, requires = "adaptive")]
    pub c_grid: Option<(f64, f64, usize)>,
    #[arg(long, default_value_t = 4, requires = "adaptive")]
    pub tv_quad_order: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// CSV with columns x,y,z.
    #[arg(long)]
    pub points: PathBuf,
    /// Mesh files to use instead of the ones recorded in the fit.
    #[arg(long, requires = "elems")]
    pub nodes: Option<PathBuf>,
    #[arg(long, requires = "nodes")]
    pub elems: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the configured number of replications.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Override the configured master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(format!("expected lo:hi:count, got {s:?}"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let count = count.trim().parse::<usize>().map_err(|e| format!("{count:?}: {e}"))?;
    Ok((num(lo)?, num(hi)?, count))
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    log::set_max_level(level);

    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(p) => p,
        Err(e) => return report(&commands::CliError::Usage(format!("thread pool: {e}"))),
    };
    match pool.install(|| commands::run(&cli.command, threads.max(1))) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

fn report(e: &commands::CliError) -> i32 {
    let (kind, code) = e.classify();
    let msg = serde_json::json!({ "error": kind, "message": e.to_string() });
    eprintln!("{msg}");
    code
}

fn main() {
    std::process::exit(dispatch(std::env::args_os()));
}
