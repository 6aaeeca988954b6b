use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("duplicate article_id {0:?}")]
    DuplicateId(String),

    #[error("invalid value for {field}: {message}")]
    InvalidValue { field: &'static str, message: String },

    #[error("unknown {what} {id:?}")]
    Unknown { what: &'static str, id: String },

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("readability undefined: {0}")]
    Readability(&'static str),

    #[error("column mismatch at position {position}: expected {expected:?}, found {found:?}")]
    ColumnMismatch {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("training data invalid: {0}")]
    Training(String),

    #[error("no model registered under {0:?}")]
    UnknownModel(String),

    #[error("model file invalid: {0}")]
    ModelFormat(String),

    #[error("baseline is 1; accuracy above baseline is undefined")]
    UndefinedBaseline,

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

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

    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidValue {
            field,
            message: message.into(),
        }
    }

    /// True for errors caused by the input data rather than by the program.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
