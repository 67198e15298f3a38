use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: bad magic, expected `{expected}`")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{path}: header field `{field}` missing or invalid")]
    HeaderFieldMissing { path: PathBuf, field: String },

    #[error("{path}: data size mismatch, expected {expected} bytes, found {found}")]
    SizeMismatch { path: PathBuf, expected: u64, found: u64 },

    #[error("band {band} pixel at offset {offset}: value {value} outside [0, {max}]")]
    ValueOutOfRange { band: usize, offset: usize, value: f64, max: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("gaussian sigma must be positive, got {0}")]
    InvalidSigma(f64),

    #[error("octave {octave} would be {width}x{height}, below the 16x16 minimum")]
    OctaveTooSmall { octave: usize, width: usize, height: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("no training pairs: {0}")]
    NoTrainingPairs(String),

    #[error("loss became non-finite at epoch {epoch}")]
    NaNLoss { epoch: usize },

    #[error("{path}: line {line}: {detail}")]
    Format { path: PathBuf, line: usize, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, detail: impl Into<String>) -> Self {
        Error::Format { path: path.into(), line, detail: detail.into() }
    }

    /// Stable machine-readable code, used by the CLI's `error: <code>: <detail>` line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::BadMagic { .. }
            | Error::HeaderFieldMissing { .. }
            | Error::SizeMismatch { .. }
            | Error::Format { .. } => "E_FORMAT",
            Error::ValueOutOfRange { .. } => "E_RANGE",
            Error::SpecInvalid(_) | Error::InvalidConfig(_) | Error::InvalidSigma(_) => "E_CONFIG",
            Error::OctaveTooSmall { .. } => "E_SIZE",
            Error::LengthMismatch { .. } | Error::DimMismatch(_) | Error::Empty(_) => "E_DIM",
            Error::EmptyGallery | Error::NoTrainingPairs(_) => "E_DATA",
            Error::NaNLoss { .. } => "E_NUMERIC",
        }
    }
}
