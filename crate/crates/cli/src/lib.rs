//! Command-line driver: configuration parsing, orchestration and output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use clap::{Parser, Subcommand};
use config::{parse_config, ConfigError, RunConfig};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("numerical error: {0}")]
    Numerical(#[from] afcsim_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "afcsim", version, about = "Cavity-enhanced AFC memory simulator")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides [output] dir)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides [montecarlo] seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the documented default configuration and exit
    #[arg(long)]
    pub print_defaults: bool,
    /// Print the resolved configuration and exit
    #[arg(long)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Single storage run: trace CSV and summary JSON
    Storage,
    /// Efficiency versus storage time
    ScanStorageTime,
    /// Efficiency versus pulse bandwidth
    ScanBandwidth,
    /// Optimal comb depth for the configured cavity
    OptimizeComb,
    /// Time-bin qubit fringes and fidelity
    QubitFringe,
    /// Cavity linewidth with the spectral pit
    Linewidth,
    /// Photon-counting emulation of storage or qubit fringes
    Montecarlo,
}

/// Load the configuration named on the command line and apply overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.montecarlo.counting.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run the command line; returns the text for stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    if cli.print_defaults {
        return Ok(RunConfig::default().to_text(true));
    }
    let cfg = resolve_config(cli)?;
    if cli.print_config {
        return Ok(cfg.to_text(false));
    }
    let command = cli
        .command
        .ok_or_else(|| CliError::Usage("no subcommand given (see --help)".into()))?;
    let paths = match command {
        Command::Storage => commands::storage(&cfg)?,
        Command::ScanStorageTime => commands::scan_storage_time_cmd(&cfg)?,
        Command::ScanBandwidth => commands::scan_bandwidth_cmd(&cfg)?,
        Command::OptimizeComb => commands::optimize_comb(&cfg)?,
        Command::QubitFringe => commands::qubit_fringe(&cfg)?,
        Command::Linewidth => commands::linewidth(&cfg)?,
        Command::Montecarlo => commands::montecarlo(&cfg)?,
    };
    Ok(paths
        .iter()
        .map(|p| format!("{}\n", p.display()))
        .collect())
}
