use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped into families (see [`Error::family`]) so that the
/// command-line front end can map each family onto a distinct exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint version error: {0}")]
    CheckpointVersion(String),

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint tensors do not match the stored spec: {0}")]
    CheckpointShape(String),

    #[error("training diverged at epoch {epoch} (mean loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("class starvation: {0}")]
    ClassStarvation(String),

    #[error("missing image file {}", path.display())]
    MissingImage { path: PathBuf },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error families, one per process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Shape,
    InvalidArgument,
    Checkpoint,
    Divergence,
    Data,
    Io,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Shape(_) => ErrorFamily::Shape,
            Error::InvalidArgument(_) => ErrorFamily::InvalidArgument,
            Error::CheckpointVersion(_)
            | Error::CheckpointTruncated(_)
            | Error::CheckpointShape(_) => ErrorFamily::Checkpoint,
            Error::Divergence { .. } => ErrorFamily::Divergence,
            Error::ClassStarvation(_)
            | Error::MissingImage { .. }
            | Error::Format(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorFamily::Data,
            Error::Io(_) => ErrorFamily::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
