//! Library backing the `betaplane` command-line harness: configuration
//! parsing, deterministic CSV output, and the five command drivers
//! (`simulate`, `tangent`, `sweep`, `limit`, `verify`).
//!
//! Everything here is deterministic by construction: runs are seeded, float
//! formatting is shortest-round-trip, collections iterate in sorted order,
//! and sweep aggregation is ordered by the configured ladders rather than by
//! worker completion order. Re-running any command with the same config and
//! seed reproduces byte-identical outputs on one platform.

pub mod commands;
pub mod config;
pub mod output;

use std::process::ExitCode;

/// Harness-level error classification, mapped to process exit codes:
/// checks = 1, configuration = 2, I/O = 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A verification or invariant check failed (the run itself succeeded).
    #[error("check failure: {0}")]
    Check(String),
    /// The configuration file is missing, malformed, or inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// Filesystem or serialization failure.
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Check(_) => ExitCode::from(1),
            CliError::Config(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(3),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Maps solver-library errors onto the exit-code classification: parameter
/// and lattice problems are configuration errors, I/O passes through, and
/// everything else surfaced at run time is a check failure.
impl From<betaplane::Error> for CliError {
    fn from(e: betaplane::Error) -> Self {
        use betaplane::Error as E;
        match e {
            E::Lattice { .. } | E::InvalidParam { .. } => CliError::Config(e.to_string()),
            E::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Check(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
