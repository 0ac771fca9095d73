use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("offset {offset} outside search scope [-{scope}, {scope})")]
    OutOfScope { offset: f64, scope: f64 },

    #[error("bin index {index} out of range (num bins {num_bins})")]
    BinIndex { index: usize, num_bins: usize },

    #[error("format error at byte offset {offset}: {msg}")]
    ByteFormat { offset: usize, msg: String },

    #[error("format error on line {line}: {msg}")]
    LineFormat { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scene generation error: {0}")]
    Generation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
