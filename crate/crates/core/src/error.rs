use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MokeyError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("shape/data mismatch: shape holds {expected} elements, data has {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("curve fit did not converge (residual {residual:e})")]
    FitNotConverged { residual: f64 },

    #[error("outlier index {index} out of range for a table of {len} entries")]
    OutlierIndex { index: u8, len: usize },

    #[error("counter saturated at {bits} bits")]
    CounterSaturated { bits: u32 },

    #[error("dictionaries use different curve constants")]
    CurveMismatch,

    #[error("malformed packed data: {0}")]
    MalformedPacked(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MokeyError>;
