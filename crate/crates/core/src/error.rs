//! Crate-wide error type and the exit-code classes used by the CLI.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, mapped to process exit codes by the CLI
/// (0 success, 1 usage/config, 2 data, 3 numerical).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("config: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("point is behind the device (z = {z})")]
    PointBehindDevice { z: f64 },

    #[error("undistortion did not converge for pixel ({u}, {v}); out-of-model pixel")]
    UndistortDiverged { u: f64, v: f64 },

    #[error("degenerate cross-power spectrum: {near_zero_fraction:.1}% of bins near zero")]
    DegenerateSpectrum { near_zero_fraction: f64 },

    #[error("image has (near-)zero variance; cannot correlate")]
    FlatImage,

    #[error("degenerate ray configuration; rays are (near-)parallel")]
    DegenerateRay,

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("scene is not visible from both devices over any pixel")]
    EmptyVisibility,

    #[error("incomplete frame set: expected {expected} images, got {got}")]
    IncompleteFrameSet { expected: usize, got: usize },

    #[error("data: {0}")]
    Data(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit-code class for the CLI.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParam(_) | Error::Config(_) => ErrorClass::Config,
            Error::DimensionMismatch { .. }
            | Error::IncompleteFrameSet { .. }
            | Error::Data(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::PointBehindDevice { .. }
            | Error::UndistortDiverged { .. }
            | Error::DegenerateSpectrum { .. }
            | Error::FlatImage
            | Error::DegenerateRay
            | Error::NonConvergence(_)
            | Error::EmptyVisibility => ErrorClass::Numerical,
        }
    }
}
