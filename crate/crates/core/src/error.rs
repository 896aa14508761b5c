use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("outcome has zero probability: {0}")]
    ImpossibleOutcome(String),

    #[error("{0} is not supported")]
    Unsupported(String),

    #[error("integration failed at step {step}: {reason}")]
    Integration { step: usize, reason: String },

    #[error("state lies off the ellipse: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("flow diverged at t = {time}")]
    BlowUp { time: f64 },

    #[error("no solution found: {0}")]
    NotFound(String),

    #[error("no shooting root in the momentum grid ({} samples scanned)", .0.momenta.len())]
    NoShootingRoot(Box<crate::oppath::MismatchProfile>),

    #[error("empty post-selection: no trajectory inside the window")]
    EmptySelection,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
