use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("batch too small: batch norm in train mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("unmapped label directory(s): {}", .0.join(", "))]
    UnmappedLabel(Vec<String>),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("duplicate path in manifest: {0}")]
    DuplicatePath(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
