use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fooling::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 2 usage, 3 data or format, 4 numeric.
    pub fn exit_code(&self) -> ExitCode {
        use fooling::Error as E;
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Numeric(_)) => 4,
            CliError::Core(E::Range(_) | E::Precondition(_)) => 2,
            CliError::Core(_) => 3,
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;
