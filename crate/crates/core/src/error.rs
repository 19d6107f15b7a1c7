//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by simulation and analysis operations.
///
/// The variants are coarse on purpose: callers (in particular the CLI)
/// map them onto exit codes, so the kind matters more than the payload.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A scalar argument is outside its physical domain (non-positive
    /// energy, distance, probability out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Two grids that must agree in dimensions or pixel size do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A grid cannot support the requested optical geometry
    /// (band-limit violation, feature below resolution, out-of-field focus).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Element synthesis could not proceed (e.g. empty kept region).
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// Underlying file I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file had the wrong format or could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
