use circlepack::Error;
use thiserror::Error;

/// Failure of a command, with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Mesh(_)
            | Error::Parse { .. }
            | Error::Domain { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidInput(_)
            | Error::EnumerationTooLarge { .. } => CliError::Input(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<circlepack::MeshError> for CliError {
    fn from(e: circlepack::MeshError) -> Self {
        CliError::Input(e.to_string())
    }
}
