use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    EmptyResult,
    Precondition,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("kernel radius {radius} does not fit a {width}x{height} image")]
    KernelTooLarge {
        radius: usize,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("no structure in histogram")]
    NoStructure,

    #[error("template match is low confidence (best score {score:.3})")]
    LowConfidence { score: f64 },

    #[error(
        "captures {first} and {second} overlap by {fraction:.3}, below the required {required:.2}"
    )]
    InsufficientOverlap {
        first: usize,
        second: usize,
        fraction: f64,
        required: f64,
    },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("no correspondences at iteration {iteration}")]
    NoCorrespondences { iteration: usize },

    #[error("registration of frame {frame} failed: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("robot is not stable: requires {required:.3} kgf, magnets provide {available:.3} kgf")]
    Unstable { required: f64, available: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Decode { .. }
            | Error::UnsupportedFormat(_)
            | Error::Json(_) => ErrorKind::Io,
            Error::Config(_) => ErrorKind::Config,
            Error::NoStructure => ErrorKind::EmptyResult,
            Error::Frame { source, .. } | Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Precondition,
        }
    }
}
