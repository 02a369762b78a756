use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible size: {rows} stacked rows exceeds the cap of {cap}")]
    InfeasibleSize { rows: usize, cap: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid cost model `{label}`: {reason}")]
    InvalidCost { label: String, reason: String },

    #[error("follower control weight of `{0}` is not positive definite; best response is singular")]
    SingularBestResponse(String),

    #[error("singular normal matrix in {0}")]
    SingularSystem(&'static str),

    #[error("update time {tau} outside (0, {horizon}]")]
    TauOutOfRange { tau: usize, horizon: usize },

    #[error("invalid belief schedule: {0}")]
    InvalidSchedule(String),

    #[error("estimator has no hypotheses")]
    EmptyHypotheses,

    #[error("NaN residual for hypothesis {0}")]
    NanResidual(usize),

    #[error("estimator underflow: every hypothesis has zero posterior mass")]
    EstimatorUnderflow,
}
