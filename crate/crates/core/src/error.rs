use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a manifest entry failed to load.
#[derive(Debug, Error)]
pub enum LoadErrorKind {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("payload length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: u64, actual: u64 },
    #[error("non-finite value at payload index {0}")]
    NonFinite(usize),
    #[error("schema: {0}")]
    Schema(String),
    #[error("annotations: {0}")]
    Annotations(String),
    #[error("recording has {samples} samples, shorter than the {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to load {entry}: {kind}")]
    Load { entry: String, kind: LoadErrorKind },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("singular interpolation system: {0}")]
    Singular(String),
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Load { .. } => "load",
            Error::InvalidInput(_) => "invalid_input",
            Error::Range(_) => "range",
            Error::DegenerateSegment(_) => "degenerate_segment",
            Error::InvalidSplit(_) => "invalid_split",
            Error::Shape(_) => "shape_mismatch",
            Error::Config(_) => "invalid_config",
            Error::Contract(_) => "contract_violation",
            Error::Singular(_) => "singular_system",
            Error::NonFinite { .. } => "non_finite",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn load(entry: impl Into<String>, kind: impl Into<LoadErrorKind>) -> Self {
        Error::Load { entry: entry.into(), kind: kind.into() }
    }
}
