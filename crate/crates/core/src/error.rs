use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("window size {0} must be odd")]
    EvenWindow(usize),
    #[error("window size {r} exceeds the {rows}x{cols} image")]
    WindowTooLarge { r: usize, rows: usize, cols: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("Gamma shape parameter must be positive and finite, got {0}")]
    InvalidNoiseLevel(f64),
    #[error("clean image has a negative or non-finite pixel {value} at {index:?}")]
    NegativeIntensity { value: f64, index: (usize, usize) },
    #[error("observed image must be strictly positive (pixel {index:?} is {value})")]
    NonPositiveObservation { value: f64, index: (usize, usize) },
    #[error("I-divergence fidelity needs u > 0 (pixel {index:?} is {value})")]
    Domain { value: f64, index: (usize, usize) },
    #[error("invalid feasible box [{lo}, {hi}]")]
    InvalidBox { lo: f64, hi: f64 },
    #[error("relative error undefined: previous iterate has zero norm")]
    ZeroReference,
    #[error("iterate became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: malformed PGM header: {reason}", path.display())]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{}: only 8-bit PGM is supported (maxval {maxval})", path.display())]
    UnsupportedDepth { path: PathBuf, maxval: u32 },
    #[error("{}: truncated pixel data ({got} of {expected} samples)", path.display())]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("{}: invalid sample at index {index}", path.display())]
    InvalidSample { path: PathBuf, index: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {reason}", path.display())]
    CaseFile {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { left: a, right: b });
    }
    Ok(())
}
