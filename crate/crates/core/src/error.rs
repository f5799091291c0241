use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("grid specs or bin counts do not match")]
    SpecMismatch,

    #[error("map shapes do not match: {0}")]
    ShapeMismatch(String),

    #[error("map too small: {0}")]
    TooSmall(String),

    #[error("mask selects no cells")]
    EmptyMask,

    #[error("distribution has zero total mass")]
    ZeroMass,

    #[error("no jointly valid cells to compare")]
    NoOverlap,

    #[error("time {t} is outside the pose path span [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid value at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code for the CLI: 1 for configuration problems, 2 for
    /// everything that goes wrong at runtime or in the data.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Validation { .. } => 1,
            _ => 2,
        }
    }
}
