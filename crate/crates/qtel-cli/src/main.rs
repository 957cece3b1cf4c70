//! `qtel`: run the cavity-decay teleportation protocols from the terminal.
//!
//! Every command resolves one configuration (defaults, then an optional JSON
//! file, then flags), writes `<out>/summary.json` plus per-command CSV/SVG
//! files, and echoes the summary to stdout. Exit codes: 0 success, 1
//! configuration error, 2 regime error (including `validate` warnings), 3
//! internal failure.

mod commands;
mod config;
mod output;
mod svg;

use std::fmt;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Regime(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Regime(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Regime(m) => write!(f, "regime error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qtel",
    about = "Teleportation of an atomic qubit through cavity decay: validated \
             closed forms and quantum-jump Monte Carlo",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Check the parameter regime and print the derived pulse quantities
    Validate,
    /// Teleport a fixed input qubit and compare against the closed forms
    Teleport,
    /// Sweep the detection window: Haar-average fidelity, analytic and MC
    Fig3,
    /// Sweep detector efficiency: analytic fidelity and success probability
    Efficiency,
    /// Distribute a Bell pair, compare mixtures, and bound its entanglement
    Entangle,
    /// Enumerate recoverable failure branches of the encoded protocol
    Insurance,
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let (cfg, warnings) = RunConfig::resolve(&cli.overrides)?;
    match cli.command {
        Command::Validate => commands::validate(&cfg, warnings),
        Command::Teleport => commands::teleport(&cfg, warnings),
        Command::Fig3 => commands::fig3(&cfg, warnings),
        Command::Efficiency => commands::efficiency(&cfg, warnings),
        Command::Entangle => commands::entangle(&cfg, warnings),
        Command::Insurance => commands::insurance(&cfg, warnings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; anything else is a usage
            // problem and lands in the configuration-error exit code.
            let kind = e.kind();
            if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
