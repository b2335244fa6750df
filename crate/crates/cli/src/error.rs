use flatcluster::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or parameters (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or unsuitable input (exit 2).
    #[error("{0}")]
    Data(String),
    /// The computation itself failed (exit 3).
    #[error("{0}")]
    Algorithm(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Algorithm(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter(_) | Error::InvalidDimension { .. } => CliError::Usage(msg),
            Error::EmptyInput
            | Error::DimensionMismatch { .. }
            | Error::InsufficientData { .. }
            | Error::NoInliers
            | Error::NonFinite(_)
            | Error::Format(_) => CliError::Data(msg),
            Error::EmptyFlatList | Error::IsolatedPoint(_) | Error::AmbiguousQuery(_) | Error::SupportMissed => {
                CliError::Algorithm(msg)
            }
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
