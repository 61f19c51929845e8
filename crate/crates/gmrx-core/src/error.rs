//! Crate-wide error type.
//!
//! Library functions never panic on bad input; they return one of the
//! variants below.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument is outside its documented range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Inputs whose dimensions must agree do not.
    #[error("shape error: {0}")]
    Shape(String),

    /// An experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Every mixture weight collapsed to zero during message passing.
    /// `step` is the symbol index being absorbed when it happened.
    #[error("degenerate message at step {step}: {detail}")]
    DegenerateMessage { step: usize, detail: String },

    /// Code construction or loading produced an unusable code.
    #[error("construction error: {0}")]
    Construction(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
