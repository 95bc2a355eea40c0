//! `semirandom`: train, evaluate and check semi-random feature networks.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 numeric failure
//! (divergence, non-finite values), 4 a check fell below its threshold.

mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

/// Failures with a dedicated exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Threshold(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Threshold(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return match f {
            Failure::Usage(_) => 2,
            Failure::Threshold(_) => 4,
        };
    }
    match err.downcast_ref::<semirandom::Error>() {
        Some(semirandom::Error::Diverged { .. } | semirandom::Error::NonFinite(_)) => 3,
        Some(semirandom::Error::Io(_)) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = commands::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
