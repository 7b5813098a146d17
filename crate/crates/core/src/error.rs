//! Crate-wide error type.

use std::path::PathBuf;

use crate::dataset::ClassLabel;
use crate::train_eval::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("{path}: line {line}: not a numeric sample")]
    Parse { path: PathBuf, line: usize },

    #[error("{0}: file contains no samples")]
    EmptyFile(PathBuf),

    #[error("window length {window_len} exceeds record length {record_len}")]
    WindowTooLong { window_len: usize, record_len: usize },

    #[error("class {0} has no records")]
    EmptyClass(ClassLabel),

    #[error("constant window: max equals min, cannot scale")]
    DegenerateRange,

    #[error("value {0} lies outside [-1, 1]")]
    Domain(f64),

    #[error("series length {len} is not divisible by target length {target}")]
    IndivisibleLength { len: usize, target: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergenceDetected {
        epoch: usize,
        history: Box<TrainHistory>,
    },

    #[error("confusion matrix is empty")]
    EmptyConfusion,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
}

impl Error {
    /// Process exit code for the CLI, one per error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            Error::MissingFile(_)
            | Error::Parse { .. }
            | Error::EmptyFile(_)
            | Error::WindowTooLong { .. }
            | Error::EmptyClass(_) => 3,
            Error::Read { .. } | Error::Write { .. } => 4,
            Error::Format { .. } | Error::IncompatibleCheckpoint(_) => 5,
            Error::DivergenceDetected { .. } => 6,
            Error::DegenerateRange
            | Error::Domain(_)
            | Error::IndivisibleLength { .. }
            | Error::ShapeMismatch(_)
            | Error::NonFinite(_)
            | Error::EmptyConfusion => 7,
        }
    }

    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Read {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
