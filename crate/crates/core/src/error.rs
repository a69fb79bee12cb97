use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumeric { column: String, value: String, row: usize },

    #[error("too short: {0}")]
    TooShort(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("gradients requested before backward()")]
    NoBackward,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
