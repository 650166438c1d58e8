use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Incompatible or invalid options.
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Core(#[from] consensus_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use consensus_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Format(_) => 3,
            CliError::Core(E::Config(_)) => 2,
            CliError::Core(
                E::InvalidGrid(_) | E::GridMismatch { .. } | E::InvalidMask(_) | E::EmptyStack,
            ) => 3,
            CliError::Core(_) => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Format(format!("csv: {e}"))
    }
}
