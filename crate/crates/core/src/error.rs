use thiserror::Error;

/// Errors reported by the flatcluster routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("flat dimension {d} must be smaller than the ambient dimension {ambient}")]
    InvalidDimension { d: usize, ambient: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("insufficient data: need more than {needed} points, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("no flats supplied")]
    EmptyFlatList,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point {0} has zero affinity to every point")]
    IsolatedPoint(usize),
    #[error("ground truth contains no inliers")]
    NoInliers,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("query point lies on {0} flats of the mixture")]
    AmbiguousQuery(usize),
    #[error("the ball misses the support of the measure")]
    SupportMissed,
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
