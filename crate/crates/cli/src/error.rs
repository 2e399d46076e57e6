use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error(transparent)]
    Core(#[from] uvpose::Error),

    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for bad input or I/O, 3 for a computation that could not succeed.
    pub fn exit_code(&self) -> u8 {
        use uvpose::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Json { .. } => 2,
            CliError::Compute(_) => 3,
            CliError::Core(e) => match e {
                E::Parse { .. }
                | E::UnsupportedFormat(_)
                | E::Io { .. }
                | E::Image { .. }
                | E::Json(_)
                | E::InvalidParameter(_)
                | E::ShapeMismatch(_)
                | E::UnnormalizedProbabilities { .. }
                | E::DuplicateObjectId(_)
                | E::MissingLookup(_) => 2,
                _ => 3,
            },
        }
    }
}
