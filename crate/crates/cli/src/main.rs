//! `burstmodel`: simulate, fit, and compare bursty event trains.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod commands;
mod grid;

use std::path::PathBuf;
use std::process::ExitCode;

use burstmodel::Variant;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "burstmodel", version, about = "Multi-scale priority model for bursty event trains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an event train and write millisecond timestamps.
    Simulate(SimulateArgs),
    /// Fit a model variant to a timestamp file.
    Fit(FitArgs),
    /// Compare fitted variants by BIC.
    Compare(CompareArgs),
    /// Log-binned interval histogram as (centre, density) rows.
    Hist(HistArgs),
    /// Interval density of a fitted model on a grid.
    EvalDensity(EvalArgs),
    /// Refractory kernel of a fitted model on a grid.
    EvalKernel(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Continuous,
    Discrete,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Variant whose kernel time constants are used.
    #[arg(long, default_value = "M1")]
    variant: Variant,
    #[arg(long, default_value_t = 0.61)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Touching rate in Hz.
    #[arg(long, default_value_t = 9.3)]
    rho: f64,
    /// Kernel coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gamma: Vec<f64>,
    /// Number of events to emit.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), conflicts_with = "duration", required_unless_present = "duration")]
    events: Option<u64>,
    /// Simulated duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, value_enum, default_value = "continuous")]
    mode: Mode,
    /// Bin width in seconds for the discrete sampler.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    variant: Variant,
    /// Timestamp file.
    #[arg(long = "in")]
    input: PathBuf,
    /// `key = value` fit configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Previously written fit results.
    #[arg(long, num_args = 1.., conflicts_with_all = ["input", "variants"], required_unless_present = "input")]
    fits: Vec<PathBuf>,
    /// Timestamp file to fit with every listed variant.
    #[arg(long = "in", requires = "variants")]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Variants fitted concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Directory for the individual fit results.
    #[arg(long)]
    fits_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HistArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u16).range(1..))]
    bins_per_decade: u16,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    fit: PathBuf,
    /// File whose first column holds τ in seconds, or `log:MIN:MAX:COUNT`.
    #[arg(long)]
    tau_grid: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Fit(args) => commands::fit(args),
        Command::Compare(args) => commands::compare(args),
        Command::Hist(args) => commands::hist(args),
        Command::EvalDensity(args) => commands::eval_density(args),
        Command::EvalKernel(args) => commands::eval_kernel(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
