use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stability bound violated: {0}")]
    StabilityViolation(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("tape does not match the model: {0}")]
    TapeMismatch(String),
    #[error("label must be 0 or 1, got {0}")]
    LabelOutOfRange(f64),
    #[error("too few time steps: {0}")]
    TooFewSteps(String),
    #[error("training diverged: {0}")]
    NonFiniteLoss(String),
    #[error("start step out of range: {0}")]
    StartOutOfRange(String),
    #[error("artifact hash mismatch for {path}: manifest has {expected}, file has {actual}")]
    HashMismatch {
        path: String,
        expected: String,
        actual: String,
    },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error: 2 for usage/config problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::StabilityViolation(_) | Error::Json(_) => 2,
            Error::Io(e) if e.kind() == io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}
