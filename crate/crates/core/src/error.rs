use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}, line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("invalid document `{id}`: {reason}")]
    InvalidDocument { id: String, reason: String },

    #[error("unknown document `{0}`")]
    UnknownDocument(String),

    #[error("unknown facet `{0}`")]
    UnknownFacet(String),

    #[error("labels must contain both relevant and non-relevant instances")]
    DegenerateLabels,

    #[error("need at least {need} instances to grow a tree, got {have}")]
    TooFewInstances { need: usize, have: usize },

    #[error("feature vector has length {got}, model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("requested {requested} trees but the model holds {available}")]
    TooManyTrees { requested: usize, available: usize },

    #[error("need at least {need} queries with a relevant item, got {have}")]
    TooFewQueries { need: usize, have: usize },

    #[error("degenerate comparison: {0}")]
    DegenerateComparison(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index format: {0}")]
    IndexFormat(String),

    #[error("cannot write field `{0}`: contains a tab or newline")]
    Unwritable(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.to_string(),
        }
    }
}
