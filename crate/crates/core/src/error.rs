use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: mapped column `{0}` not found in header")]
    MissingColumn(String),

    #[error("empty scope: {0}")]
    EmptyScope(String),

    #[error("self-loop edge on node `{0}`")]
    SelfLoop(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty vocabulary: no document has a retained term")]
    EmptyVocabulary,

    #[error("embedding file is missing ids: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("embedding for `{id}` has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },

    #[error("embedding for `{0}` contains a non-finite value")]
    NonFinite(String),

    #[error("degenerate clustering: centroids {0} and {1} coincide")]
    DegenerateClustering(usize, usize),

    #[error("too few points for a logistic fit: {found} distinct years, need at least {needed}")]
    TooFewPoints { found: usize, needed: usize },

    #[error("degenerate series: cumulative count is constant")]
    DegenerateSeries,

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("stale artifact {path}: {reason}")]
    StaleArtifact { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
