//! `elver` — simulate low-dose electron hypothesis verification.
//!
//! Subcommands:
//! * `wavelength` — relativistic de Broglie wavelengths for a list of energies
//! * `synthesize` — build the diffractive element and report its focal gain
//! * `ensemble`   — run seeded Monte Carlo ensembles for both truths
//! * `grating`    — reproduce the point-projection grating experiment
//! * `verify`     — recheck output artifacts (config hashes, event replay)
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical/geometry error.

// validations use `!(x > 0.0)` on purpose: unlike `x <= 0.0` it also
// rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

/// Application error with the exit code it maps to.
#[derive(Debug)]
pub enum AppError {
    /// Bad input: config, flags, file formats. Exit code 2.
    Validation(String),
    /// Numerical or geometry failure during computation, or I/O. Exit 3.
    Compute(String),
}

impl AppError {
    pub fn validation(msg: String) -> Self {
        AppError::Validation(msg)
    }

    pub fn compute(err: elver_core::CoreError) -> Self {
        AppError::Compute(err.to_string())
    }

    pub fn compute_msg(msg: String) -> Self {
        AppError::Compute(msg)
    }

    pub fn io(err: std::io::Error) -> Self {
        AppError::Compute(err.to_string())
    }

    fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) => 2,
            AppError::Compute(_) => 3,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Validation(m) => write!(f, "validation error: {m}"),
            AppError::Compute(m) => write!(f, "compute error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "elver", version, about = "Low-dose electron hypothesis verification simulator")]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for trial/sweep parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the Bayesian update mode.
    #[arg(long, global = true, value_parser = ["detections-only", "full-information"])]
    mode: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print electron wavelengths for the given energies (eV).
    Wavelength {
        #[arg(required = true)]
        energies: Vec<f64>,
    },
    /// Synthesize the diffractive element and write element/report files.
    Synthesize,
    /// Run seeded trial ensembles for truth = Right and truth = Wrong.
    Ensemble,
    /// Simulate grating diffraction patterns over the configured energies.
    Grating,
    /// Re-check artifacts in the output directory.
    Verify {
        /// Also rebuild the chain and replay event logs.
        #[arg(long)]
        full: bool,
    },
}

fn load_config(cli: &Cli) -> Result<config::ResolvedConfig, AppError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.stats.master_seed = seed;
    }
    if let Some(mode) = &cli.mode {
        cfg.stats.mode = mode.clone();
    }
    cfg.resolve()
}

fn run(cli: &Cli) -> Result<(), AppError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| AppError::validation(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Wavelength { energies } => commands::wavelength(energies),
        Command::Synthesize => {
            let cfg = load_config(cli)?;
            commands::synthesize(&cfg, &cli.out)
        }
        Command::Ensemble => {
            let cfg = load_config(cli)?;
            commands::ensemble(&cfg, &cli.out)
        }
        Command::Grating => {
            let cfg = load_config(cli)?;
            commands::grating(&cfg, &cli.out)
        }
        Command::Verify { full } => commands::verify(&cli.out, *full),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
