//! Failure classes and their exit codes.

use std::fmt;
use std::path::PathBuf;

use emogest_core::CoreError;
use emogest_data::DataError;
use emogest_eval::EvalError;
use emogest_model::ModelError;

pub const OK: u8 = 0;
pub const FAILURE: u8 = 1;
pub const VALIDATION: u8 = 2;
pub const MISSING_PREREQUISITE: u8 = 3;
pub const NUMERIC: u8 = 4;

/// A stage input that an earlier stage should have produced.
#[derive(Debug)]
pub struct MissingPrerequisite {
    pub stage: &'static str,
    pub path: PathBuf,
    pub detail: String,
}

impl fmt::Display for MissingPrerequisite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "missing {} output at {} ({}); run `emogest {}` first",
            self.stage,
            self.path.display(),
            self.detail,
            self.stage
        )
    }
}

impl std::error::Error for MissingPrerequisite {}

/// Invalid arguments, configs or data.
#[derive(Debug)]
pub struct Validation(pub String);

impl fmt::Display for Validation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Validation {}

pub fn validation(msg: impl Into<String>) -> anyhow::Error {
    Validation(msg.into()).into()
}

/// Maps an error chain to an exit code.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<MissingPrerequisite>() {
            return MISSING_PREREQUISITE;
        }
        if cause.is::<Validation>() {
            return VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return model_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::NotPsd(_) => NUMERIC,
                EvalError::Invalid(msg) if msg.contains("non-finite") => NUMERIC,
                EvalError::Invalid(_) => VALIDATION,
                EvalError::Core(c) => core_code(c),
                EvalError::Model(m) => model_code(m),
                EvalError::Tensor(_) => FAILURE,
            };
        }
        if let Some(e) = cause.downcast_ref::<DataError>() {
            return match e {
                DataError::Io { .. } => FAILURE,
                DataError::Core(c) => core_code(c),
                _ => VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
    }
    FAILURE
}

fn model_code(e: &ModelError) -> u8 {
    match e {
        ModelError::NonFinite { .. } => NUMERIC,
        ModelError::Untrained(_) => MISSING_PREREQUISITE,
        ModelError::Shape(_) | ModelError::Data(_) | ModelError::Checkpoint(_) => VALIDATION,
        ModelError::Core(c) => core_code(c),
        _ => FAILURE,
    }
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Io { .. } => FAILURE,
        _ => VALIDATION,
    }
}
