//! `fbmsde` command-line driver.
//!
//! Exit codes: 0 on success, 1 on runtime or solver failure, 2 on usage or
//! configuration errors.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbmsde::{FbmMethod, Scheme};

#[derive(Debug, Parser)]
#[command(name = "fbmsde", version, about = "Simulate SDEs driven by fractional Brownian motion")]
struct Cli {
    /// Worker threads for Monte Carlo runs (all cores when unset).
    #[arg(long, global = true, env = "FBMSDE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample one fBm path.
    Fbm(FbmArgs),
    /// Integrate one trajectory.
    Simulate(SimulateArgs),
    /// Strong-error table and fitted order from a config file.
    Rate(ConfigArgs),
    /// Compare the scaled error with the asymptotic error process.
    Limit(ConfigArgs),
    /// Explicit versus implicit schemes on a scalar problem.
    Stability(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct FbmArgs {
    /// Hurst parameter, or one per coordinate (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub hurst: Vec<f64>,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = FbmMethod::Cholesky)]
    pub method: FbmMethod,
    /// Output directory.
    #[arg(long, default_value = "fbmsde-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in drift name, or `linear` together with `--matrix`.
    #[arg(long)]
    pub drift: String,
    /// Rows separated by `;`, entries by `,` (for `--drift linear`).
    #[arg(long, allow_hyphen_values = true)]
    pub matrix: Option<String>,
    #[arg(long, default_value_t = Scheme::BackwardEuler)]
    pub scheme: Scheme,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x0: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.7")]
    pub hurst: Vec<f64>,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = FbmMethod::Cholesky)]
    pub method: FbmMethod,
    #[arg(long, default_value_t = 1e-12)]
    pub newton_tol: f64,
    #[arg(long, default_value_t = 50)]
    pub newton_max_iter: usize,
    /// Allow implicit steps with kappa * delta above the guard limit.
    #[arg(long)]
    pub no_kappa_guard: bool,
    /// Drive the equation with the zero path instead of fBm.
    #[arg(long)]
    pub zero_noise: bool,
    #[arg(long, default_value = "fbmsde-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` config file, or a `meta.json` manifest of an earlier run.
    pub config: PathBuf,
    #[arg(long, default_value = "fbmsde-out")]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(Vec<String>),
    Runtime(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::Usage(vec![message.into()])
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fbm(args) => commands::fbm(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Rate(args) => commands::rate(args, cli.threads),
        Command::Limit(args) => commands::limit(args, cli.threads),
        Command::Stability(args) => commands::stability(args, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(problems)) => {
            for p in problems {
                eprintln!("error: {p}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
