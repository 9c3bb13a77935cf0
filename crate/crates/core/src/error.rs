use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("support mismatch at index {0}: p > 0 where q = 0")]
    SupportMismatch(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid annotations: {0}")]
    InvalidAnnotations(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all weights are zero")]
    AllZeroWeights,

    #[error("spectral method requires K = 2, got K = {0}")]
    NotBinary(usize),

    #[error("item {0} has no annotations")]
    EmptyItem(usize),

    #[error("insufficient annotator pairs: {0}")]
    InsufficientPairs(String),

    #[error("selected anchors are rank deficient")]
    AnchorDegenerate,

    #[error("annotator {0} is not covered by any available triple")]
    UncoveredAnnotator(usize),

    #[error("group {0} is empty; try a smaller number of groups")]
    EmptyGroup(usize),

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, trace: Vec<f64> },

    #[error("lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("need at least 3 points, got {0}")]
    InsufficientPoints(usize),

    #[error("non-positive error rate at point {0}")]
    NonPositiveError(usize),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures caused by numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. } | Error::AnchorDegenerate | Error::EmptyGroup(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
