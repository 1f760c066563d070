use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("{path}: I/O error: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("record ({row}, {col}, {value}): {message}")]
    NonFinite {
        row: u32,
        col: u32,
        value: f64,
        message: String,
    },

    #[error("word index {index} has no cooccurrence support")]
    NoSupport { index: usize },

    #[error("{0}")]
    Undefined(String),

    #[error("training aborted: {skipped} of {processed} records skipped (limit {limit})")]
    TooManySkipped {
        skipped: u64,
        processed: u64,
        limit: u64,
    },

    #[error("word not in vocabulary: {0}")]
    OutOfVocabulary(String),

    #[error("{0}")]
    Conflict(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| Error::File { path, source }
    }

    /// True for errors caused by bad configuration or input files rather than
    /// failures while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation { .. } | Error::Parse { .. } => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub fn is_conflict(&self) -> bool {
        match self {
            Error::Conflict(_) => true,
            Error::Stage { source, .. } => source.is_conflict(),
            _ => false,
        }
    }
}
