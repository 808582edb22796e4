use thiserror::Error;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] emogest_model::ModelError),

    #[error(transparent)]
    Core(#[from] emogest_core::CoreError),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("covariance is not positive semi-definite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(EvalError::Invalid(msg.into()))
}
