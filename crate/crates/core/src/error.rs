//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph construction, transforms, extraction, simulation
/// and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph has no active vertices")]
    EmptyGraph,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("signal too short: {0}")]
    InvalidLength(String),

    #[error("invalid frame configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot normalize an all-zero map")]
    UndefinedReference,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("channel {channel} has {found} beats, need at least 2")]
    InsufficientBeats { channel: usize, found: usize },

    #[error("simulation diverged at step {step}")]
    SimulationBlowUp { step: usize },

    #[error("invalid electrode geometry: {0}")]
    InvalidGeometry(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("unsupported file version {0}")]
    UnsupportedVersion(u16),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
