use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("cannot read config {path}: {source}")]
    ConfigFile {
        path: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error(transparent)]
    Lib(#[from] fluortraj::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = Result<T, CliError>;

pub fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Invalid(msg.into()))
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures, 4 for an empty post-selection.
    pub fn exit_code(&self) -> ExitCode {
        use fluortraj::Error as E;
        let code = match self {
            CliError::Invalid(_) | CliError::ConfigFile { .. } => 2,
            CliError::Lib(E::Config(_) | E::InvalidState(_) | E::Parse(_) | E::Unsupported(_)) => 2,
            CliError::Lib(E::EmptySelection) => 4,
            CliError::Lib(_) | CliError::CheckFailed(_) | CliError::Io(_) => 3,
        };
        ExitCode::from(code)
    }
}
