//! Reproducible command-line runs over the mixed Rabi library.
//!
//! A run is a pure function of its [`RunConfig`]: it writes one or more data
//! files (CSV or JSON) and a `manifest.json` recording the config, the
//! truncations actually used and any warnings.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use mixed_rabi::RabiError;
use thiserror::Error;

pub use config::{CommandKind, Format, Grid, ModelChoice, NumericConfig, OutputConfig, ParamsConfig, RunConfig};
pub use output::Outcome;

/// Exit status for an invalid configuration.
pub const EXIT_INVALID: i32 = 2;
/// Exit status for a convergence failure.
pub const EXIT_CONVERGENCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Compute(#[from] RabiError),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_INVALID,
            CliError::Compute(e) => match e {
                RabiError::InvalidParams(_)
                | RabiError::InvalidInput(_)
                | RabiError::PoleProximity { .. }
                | RabiError::NotOnPole { .. }
                | RabiError::PoleCoincidence { .. } => EXIT_INVALID,
                RabiError::ConvergenceFailure(_)
                | RabiError::UnstableRoot { .. }
                | RabiError::TruncationNotConverged(_)
                | RabiError::Overflow { .. } => EXIT_CONVERGENCE,
                RabiError::Io(_) => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub outcome: Outcome,
    pub written: Vec<PathBuf>,
}

/// Validates, computes and writes.
pub fn run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let outcome = commands::execute(cfg)?;
    let written = output::write_outcome(cfg, &outcome)?;
    Ok(RunReport { outcome, written })
}

/// Caps the global thread pool from `RABI_THREADS`, if set.
pub fn configure_threads() -> Result<(), CliError> {
    match std::env::var("RABI_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Config(format!("RABI_THREADS must be a positive integer, got {v:?}")))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string()))
        }
        Err(_) => Ok(()),
    }
}
