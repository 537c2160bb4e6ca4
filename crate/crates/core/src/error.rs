use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty taxonomy")]
    EmptyTaxonomy,
    #[error("duplicate function name {0:?}")]
    DuplicateName(String),
    #[error("orphan node {name:?}: parent {parent:?} is not defined")]
    OrphanNode { name: String, parent: String },
    #[error("cycle in taxonomy through {0:?}")]
    Cycle(String),
    #[error("invalid taxonomy document: {0}")]
    TaxonomyFormat(String),
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("level {level} out of range 1..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("invalid label path: {0}")]
    InvalidPath(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("dialog {dialog:?}: expected segment index {expected}, found {found}")]
    NonContiguous {
        dialog: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate dialog id {0:?}")]
    DuplicateDialog(String),
    #[error("cannot build folds: {0}")]
    TooFewFolds(String),

    #[error("ragged embedding file: key {key:?} has length {found}, expected {expected}")]
    RaggedEmbeddings { key: String, expected: usize, found: usize },
    #[error("no precomputed vector for segment {0:?}")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty training data")]
    EmptyData,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported model file version {0}")]
    ModelVersion(u32),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("no evaluation examples")]
    NoExamples,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
