use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("input too short: {0}")]
    Length(String),

    #[error("input too small: {0}")]
    Size(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient statistics: {0}")]
    Statistics(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty data: {0}")]
    Data(String),

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{path}: {source}")]
    FileFormat {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// Attaches a file path to a format error; other variants pass through.
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ Error::Format { .. } => Error::FileFormat {
                path: path.into(),
                source: Box::new(e),
            },
            other => other,
        }
    }
}
