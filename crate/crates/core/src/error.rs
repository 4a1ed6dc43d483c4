use thiserror::Error;

/// Errors produced by trace handling, simulation and auditing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("instance exceeds search limits: {0}")]
    SizeLimit(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity error: need {need} tokens, only {available} available")]
    Capacity { need: usize, available: usize },

    #[error("cost ratio undefined: optimal miss count is zero")]
    UndefinedRatio,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
