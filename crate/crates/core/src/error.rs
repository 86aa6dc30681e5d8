use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("leiden markup error at byte {offset}: {message}")]
    Leiden { offset: usize, message: String },

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("cannot train on an empty corpus")]
    EmptyCorpus,

    #[error("model has not been trained: {0}")]
    Untrained(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("unsupported file format: {0}")]
    Format(String),

    #[error("endpoint returned HTTP {status}")]
    Endpoint { status: u16 },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            context: context.into(),
            source,
        }
    }
}
