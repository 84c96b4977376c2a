use std::process::ExitCode;

use thiserror::Error;

/// Failures mapped onto the stable exit codes: 1 numerical, 2 validation.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Numerical(_) => ExitCode::from(1),
            CliError::Invalid(_) => ExitCode::from(2),
        }
    }
}

impl From<fofreg::Error> for CliError {
    fn from(e: fofreg::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}
