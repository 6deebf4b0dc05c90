use std::path::PathBuf;

use crate::volume::Geometry;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the analysis engine.
///
/// [`Error::is_validation`] separates bad inputs (the caller can fix them)
/// from failures that happen while the data is being processed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry mismatch: {left} vs {right}")]
    GeometryMismatch { left: Box<Geometry>, right: Box<Geometry> },

    #[error("non-finite voxel value at index {index}")]
    NonFinite { index: usize },

    #[error("{0}")]
    Undefined(String),

    #[error("rank-deficient design matrix: collinear columns {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("stage {stage} produced out-of-range probability {value} at voxel {index}")]
    StageOutOfRange { stage: usize, index: usize, value: f32 },

    #[error("malformed MetaImage header {path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("raw data size mismatch for {path}: expected {expected} bytes, found {actual}")]
    RawSize { path: PathBuf, expected: u64, actual: u64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by inputs rather than by processing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::GeometryMismatch { .. }
                | Error::NonFinite { .. }
                | Error::Header { .. }
                | Error::RawSize { .. }
                | Error::RankDeficient { .. }
                | Error::Undefined(_)
        )
    }
}
