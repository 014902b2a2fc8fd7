use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("histogram not normalized (total mass {0})")]
    NotNormalized(f64),
    #[error("histogram has zero total mass")]
    ZeroMass,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid color {0:?}, expected #RRGGBB")]
    InvalidColor(String),
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("palette augmentation requires a palette")]
    MissingPalette,
    #[error("instance too large for the LP oracle: {0} nonzero bins (limit {1})")]
    OracleTooLarge(usize, usize),
    #[error("LP oracle failed: {0}")]
    Oracle(String),
    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },
    #[error("image decode failed for {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}
