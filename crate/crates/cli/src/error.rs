use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: probtaylor::Error,
    },
    /// A run finished but its numerical result is outside the requested bounds.
    #[error("check failed: {0}")]
    Check(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 1 for configuration and IO problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Numerical { .. } | CliError::Check(_) => 2,
        }
    }

    /// Classifies a library error raised while running `context`.
    pub fn from_core(context: impl Into<String>, e: probtaylor::Error) -> Self {
        use probtaylor::Error as E;
        match e.root() {
            E::InvalidParameter(_) | E::InvalidData(_) | E::DimensionMismatch { .. } | E::Parse(_) | E::Domain { .. } => {
                CliError::Validation(format!("{}: {e}", context.into()))
            }
            _ => CliError::Numerical {
                context: context.into(),
                source: e,
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
