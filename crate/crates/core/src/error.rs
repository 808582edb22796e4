use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid skeleton: {0}")]
    Skeleton(String),

    #[error("invalid pose sequence: {0}")]
    Pose(String),

    #[error("invalid segment layout: {0}")]
    Layout(String),

    #[error("invalid emotion: {0}")]
    Emotion(String),

    #[error("invalid audio: {0}")]
    Audio(String),

    #[error("invalid sample {id}: {reason}")]
    Sample { id: String, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
