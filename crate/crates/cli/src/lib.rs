//! Batch front end for the placement library: argument parsing, config
//! resolution and the `solve`, `sweep`, `subpkt` and `verify` commands.

pub mod args;
pub mod commands;
pub mod config;

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use thiserror::Error;

pub use args::{Cli, Command};
pub use commands::{cmd_solve, cmd_subpkt, cmd_sweep, cmd_verify};
pub use config::{ExperimentConfig, Format, RawConfig};

/// Failures that map to dedicated exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("instance exceeds the verification guard: {0}")]
    Guard(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_GUARD: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use ccs_placement::Error as E;
    if let Some(e) = err.downcast_ref::<CliError>() {
        return match e {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Guard(_) => EXIT_GUARD,
            CliError::Verification(_) => EXIT_VERIFY,
        };
    }
    match err.downcast_ref::<E>() {
        Some(E::InstanceTooLarge { .. }) => EXIT_GUARD,
        Some(E::InvalidParameter(_) | E::InvalidDistribution(_) | E::DimensionMismatch(_) | E::Overflow { .. }) => {
            EXIT_CONFIG
        }
        _ => 1,
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandOutput {
    /// Main result in the requested format.
    pub data: String,
    /// Secondary artifacts written next to `--out`.
    pub extra_files: Vec<(PathBuf, String)>,
    /// Human-readable lines.
    pub summary: Vec<String>,
    /// Some check failed (verify only).
    pub failed: bool,
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli) -> Result<(CommandOutput, Option<PathBuf>)> {
    let (common, kind) = match &cli.command {
        Command::Solve(c) => (c, Kind::Solve),
        Command::Sweep(c) => (c, Kind::Sweep),
        Command::Subpkt(c) => (c, Kind::Subpkt),
        Command::Verify(c) => (c, Kind::Verify),
    };
    let raw = config::load(common)?;
    let out_path = raw.out.clone();
    let output = match kind {
        Kind::Solve => cmd_solve(&raw.resolve()?)?,
        Kind::Sweep => cmd_sweep(&raw.resolve()?)?,
        Kind::Subpkt => cmd_subpkt(&raw.resolve()?)?,
        Kind::Verify => cmd_verify(&raw)?,
    };
    Ok((output, out_path))
}

enum Kind {
    Solve,
    Sweep,
    Subpkt,
    Verify,
}

/// Writes the data to `out` (plus any extra files) and the summary to
/// stdout, or the data to stdout and the summary to stderr.
pub fn emit(output: &CommandOutput, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, &output.data).with_context(|| format!("writing {}", path.display()))?;
            for (p, text) in &output.extra_files {
                fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            }
            for line in &output.summary {
                println!("{line}");
            }
        }
        None => {
            print!("{}", output.data);
            for line in &output.summary {
                eprintln!("{line}");
            }
        }
    }
    Ok(())
}
