//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is degenerate: {0}")]
    DegenerateCloud(String),

    #[error("point cloud has zero diameter (all points identical)")]
    ZeroDiameter,

    #[error("triplet points are collinear or coincident")]
    DegenerateTriangle,

    #[error("no triplet satisfies the wide-baseline edge threshold")]
    NoValidTriplet,

    #[error("no valid triplet pool could be built on the second cloud")]
    EmptyPool,

    #[error("power iteration collapsed: iterate norm below 1e-300")]
    NumericalCollapse,

    #[error("fewer than 3 one-to-one matches available")]
    InsufficientMatches,

    #[error("RANSAC found no consensus set of at least 3 pairs")]
    NoConsensus,

    #[error("consecutive correspondence distance below 1e-12; scale ratio undefined")]
    ZeroEdge,

    #[error("matched points are degenerate (cross-covariance rank < 2)")]
    DegenerateConfiguration,

    #[error("cloud dropped below {minimum} points after {stage}")]
    TooFewPoints { stage: &'static str, minimum: usize },

    #[error("unknown builtin shape '{0}'")]
    UnknownShape(String),

    #[error("tensor/vector dimensions disagree: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub(crate) fn parse_byte(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("byte {offset}"),
            message: message.into(),
        }
    }
}
