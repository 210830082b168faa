use std::io;

use thiserror::Error;

use crate::dataset::wav::WavError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Wav(#[from] WavError),

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// Malformed label, manifest, or config text.
    #[error("parse error: {0}")]
    Parse(String),

    /// Binary tensor / weights file problems.
    #[error("{0}")]
    Format(String),

    #[error("shape mismatch at {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Data(String),

    /// Non-finite loss or activation during training.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
