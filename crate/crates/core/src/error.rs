use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature missed tolerance {tolerance:e}: achieved error bound {achieved:e}")]
    Quadrature { tolerance: f64, achieved: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lattice of {required} points exceeds the budget of {budget} points")]
    LatticeBudget { required: u64, budget: u64 },

    #[error("not enough scales: need at least {needed}, got {got}")]
    TooFewScales { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("point cloud error: {0}")]
    Cloud(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn measure(msg: impl Into<String>) -> Self {
        Error::InvalidMeasure(msg.into())
    }
}
