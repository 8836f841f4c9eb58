//! Experiment harness for `rpmfft`: TOML-configured solves, contrast and
//! reference-medium sweeps, and solver comparisons written as CSV.

pub mod commands;
pub mod config;
pub mod output;
pub mod run;

use commands::{CliError, Summary};

/// Every run converged.
pub const EXIT_OK: i32 = 0;
/// I/O or other runtime failure.
pub const EXIT_RUNTIME: i32 = 1;
/// The configuration was rejected before any solve started.
pub const EXIT_CONFIG: i32 = 2;
/// Some, but not all, runs failed to converge.
pub const EXIT_PARTIAL: i32 = 3;
/// No run converged.
pub const EXIT_NONE_CONVERGED: i32 = 4;

pub fn exit_code(result: &Result<Summary, CliError>) -> i32 {
    match result {
        Ok(s) if s.converged == s.runs => EXIT_OK,
        Ok(s) if s.converged == 0 => EXIT_NONE_CONVERGED,
        Ok(_) => EXIT_PARTIAL,
        Err(CliError::Config(_)) => EXIT_CONFIG,
        Err(CliError::Io(_)) => EXIT_RUNTIME,
    }
}
