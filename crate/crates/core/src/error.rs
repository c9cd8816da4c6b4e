use std::path::PathBuf;

use thiserror::Error;

use crate::image::Geometry;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("geometry mismatch: expected {expected}, found {found}")]
    Geometry { expected: Geometry, found: Geometry },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("degenerate metric at this input: {0}")]
    DegenerateMetric(String),
    #[error("unresolved weight for metric `{0}`")]
    UnresolvedWeight(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bitstream truncated")]
    Truncated,
    #[error("undefined correlation: constant score vector")]
    UndefinedCorrelation,
    #[error("non-overlapping curves")]
    NonOverlapping,
    #[error("non-monotone quality in rd curve")]
    NonMonotone,
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
