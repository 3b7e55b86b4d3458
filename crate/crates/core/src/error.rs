use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite {what} in `{name}`")]
    NonFinite { what: &'static str, name: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint {0} does not exist")]
    MissingCheckpoint(PathBuf),

    #[error("checkpoint {path}: bad magic bytes")]
    BadMagic { path: PathBuf },

    #[error("checkpoint {path}: unsupported format version {found:?}")]
    VersionMismatch { path: PathBuf, found: String },

    #[error("checkpoint {path}: truncated ({detail})")]
    Truncated { path: PathBuf, detail: String },

    #[error("checkpoint {path}: inconsistent parameter table ({detail})")]
    ShapeTable { path: PathBuf, detail: String },

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("{file}, row {row}: {msg}")]
    Row { file: PathBuf, row: usize, msg: String },

    #[error("dataset: {0}")]
    Data(String),

    #[error("image {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
