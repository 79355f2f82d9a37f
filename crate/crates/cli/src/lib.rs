//! Command-line driver: configuration, subcommands and exit-code policy.

pub mod commands;
pub mod config;

use thiserror::Error;
use topopt_core::{Error, ExprError};

/// Exit code for configuration problems.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code for numerical failures.
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Expr(ExprError::Domain { .. })
            | Error::Solve(_)
            | Error::Trace(_)
            | Error::Admissibility(_)
            | Error::Compare(_) => CliError::Numerical(msg),
            Error::Mesh(_) | Error::Expr(_) | Error::Parameter(_) | Error::Io(_) => CliError::Config(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}
