use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite argument to {0}")]
    NonFinite(&'static str),

    #[error("singular mass term M = {mass:e} at phi = {phi}, l = {l}")]
    SingularMass { mass: f64, phi: f64, l: f64 },

    #[error("link length l = {l} left the corridor [{lo}, {hi}] at step {step}")]
    OutOfCorridor { step: usize, l: f64, lo: f64, hi: f64 },

    #[error("phi = {target} not reached within {horizon} s")]
    HorizonExceeded { target: f64, horizon: f64 },

    #[error("trajectory never reaches phi = {0}")]
    NotReached(f64),

    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("series too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("frame {frame}: marker `{marker}` missing")]
    MissingMarker { frame: usize, marker: String },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }
}
