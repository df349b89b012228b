use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },

    #[error("parameter structures differ: {0}")]
    StructureMismatch(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("class {0} is absent from the data; cannot build a balanced batch")]
    MissingClass(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("clip of {len} frames exceeds the maximum clip length {max}")]
    ClipTooLong { len: usize, max: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A runtime invariant did not hold; never caused by user input.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
