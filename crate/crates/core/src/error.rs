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
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error("shape error at row {row}: expected {expected} cells, found {found}")]
    Shape {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("kind error at row {row}, column `{column}`: {detail}")]
    Kind {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("schema mismatch for table `{table_id}`: {detail}")]
    SchemaMismatch { table_id: String, detail: String },
    #[error("config error at `{key}`: {detail}")]
    Config { key: String, detail: String },
    #[error("table `{0}` has too few rows")]
    EmptyTable(String),
    #[error("missing cell in column `{column}`")]
    MissingCell { column: String },
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("codec fitted on `{expected}` applied to a row of `{found}`")]
    CodecMismatch { expected: String, found: String },
    #[error("tensor shape error: {0}")]
    TensorShape(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("feature space mismatch: model expects `{expected}`, input is `{found}`")]
    FeatureSpaceMismatch { expected: String, found: String },
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("grouped folds need at least {needed} groups, pool has {found}")]
    TooFewGroups { needed: usize, found: usize },
    #[error("leakage detected in fold {fold}: {detail}")]
    Leakage { fold: usize, detail: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            detail: detail.into(),
        }
    }

    /// Errors caused by the data rather than by usage or the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config { .. } | Error::Unsupported(_))
    }
}
