// `!(x > y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<ferulam_core::Error> for CliError {
    fn from(e: ferulam_core::Error) -> Self {
        use ferulam_core::Error as E;
        match e {
            E::Config(_) | E::InvalidForcing(_) | E::Resonant { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ferulam", version, about = "Quasi-periodically forced ping-pong experiments")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output directory; the FERULAM_OUT environment variable takes precedence.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Iterate one orbit of the (t, E) map; writes orbit.csv, orbit.svg, simulate.json.
    Simulate {
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Escape/recurrence census over Haar-random ω.
    Census {
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Drift of p²E: scaling fit and calibrated bound check.
    Drift,
    /// Haar measure of rectangles against the section-times-time product.
    Decompose,
    /// Two distinct states with a common successor.
    Counterexample,
    /// Validate the configuration and forcing without running anything.
    Validate,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let n_max = match cli.command {
        Command::Simulate { n_max } | Command::Census { n_max } => n_max,
        _ => None,
    };
    let (raw, base) = config::load(cli.config.as_deref())?;
    let resolved = config::resolve(
        raw,
        &base,
        config::Overrides {
            seed: cli.seed,
            n_max,
        },
    )?;
    let out = std::env::var_os("FERULAM_OUT")
        .map(PathBuf::from)
        .or(cli.out)
        .unwrap_or_else(|| PathBuf::from("ferulam-out"));
    let ctx = commands::Context { resolved, out };
    let job = || match cli.command {
        Command::Simulate { .. } => commands::simulate(&ctx),
        Command::Census { .. } => commands::census(&ctx),
        Command::Drift => commands::drift(&ctx),
        Command::Decompose => commands::decompose(&ctx),
        Command::Counterexample => commands::counterexample(&ctx),
        Command::Validate => commands::validate(&ctx),
    };
    match cli.workers {
        Some(0) => Err(CliError::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot build a pool of {n} workers: {e}")))?
            .install(job),
        None => job(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ferulam: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
