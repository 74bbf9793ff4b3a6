use cvgauss::Error;
use thiserror::Error as ThisError;

/// Failure classes, each mapped to a process exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("not converged: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }

    /// Classifies a library error raised while processing data.
    pub fn data(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } => CliError::NotConverged(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }

    /// Classifies a library error raised while validating configuration.
    pub fn config(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } => CliError::NotConverged(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
