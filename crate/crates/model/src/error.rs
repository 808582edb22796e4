use thiserror::Error;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Core(#[from] emogest_core::CoreError),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{0} has not been trained; run its pretraining stage first")]
    Untrained(&'static str),

    #[error("training data: {0}")]
    Data(String),

    #[error("non-finite {part} loss at epoch {epoch}, step {step}")]
    NonFinite {
        part: &'static str,
        epoch: usize,
        step: usize,
    },

    #[error("classifier output is not a distribution: {0}")]
    NotADistribution(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ModelError::Shape(msg.into()))
}
