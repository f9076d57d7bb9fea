use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    NotSymmetric { row: usize, col: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("conditioning block is singular or ill-conditioned (condition number {cond:e})")]
    SingularBlock { cond: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid truncation box: {0}")]
    InvalidBox(String),

    #[error("normalizing constant underflows (log value {log_value})")]
    Underflow { log_value: f64 },

    #[error("truncation region carries numerically zero probability (log probability {log_prob})")]
    DegenerateBox { log_prob: f64 },

    #[error("negative argument {value} at coordinate {index}; folded quantities need y >= 0")]
    NegativeArgument { index: usize, value: f64 },

    #[error("dimension {dim} exceeds the limit {max} for this method")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("moment order {order} in coordinate {index} exceeds the limit {max}")]
    MomentOrderTooLarge { index: usize, order: u32, max: u32 },

    #[error("Monte Carlo acceptance rate {rate:e} is below {min:e}; use the corrected analytic path")]
    RejectionTooHigh { rate: f64, min: f64 },

    #[error("adaptive quadrature did not converge (estimate {estimate}, error {error:e})")]
    QuadratureNonConvergence { estimate: f64, error: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
