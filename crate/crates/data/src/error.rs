use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Core(#[from] emogest_core::CoreError),

    #[error("{adapter} adapter failed: {reason}")]
    Adapter { adapter: &'static str, reason: String },

    #[error("transcript response is not usable: {0}")]
    Transcript(String),

    #[error("word error rate needs a non-empty reference")]
    EmptyReference,

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn adapter(adapter: &'static str, reason: impl Into<String>) -> Self {
        Self::Adapter {
            adapter,
            reason: reason.into(),
        }
    }
}
