use std::path::PathBuf;

/// Errors raised anywhere in the detection pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// Malformed input data: bad dimensions, bad magic, out-of-range pixels.
    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The one-class training protocol was violated.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A non-finite value appeared; `stage` names where.
    #[error("numeric error in {stage}: {msg}")]
    Numeric { stage: &'static str, msg: String },

    #[error("degenerate power-law fit: only {usable} usable bands")]
    DegenerateFit { usable: usize },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("mask has no valid entries")]
    DegenerateMask,

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numeric(stage: &'static str, msg: impl Into<String>) -> Self {
        Error::Numeric {
            stage,
            msg: msg.into(),
        }
    }
}
