use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a structural invariant (ragged rows, non-finite values, m < 2, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// The design cannot support the requested estimator, e.g. no subject
    /// contributes a repeated observation.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("nonpositive diagonal entries at indices {indices:?}")]
    NonpositiveDiagonal { indices: Vec<usize> },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("symmetric eigensolver failed to converge")]
    EigenFailure,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// ADMM hit its iteration cap. The last iterate is kept so callers can
    /// still inspect or use it.
    #[error(
        "ADMM did not converge in {iterations} iterations \
         (primal residual {primal_residual:e}, dual residual {dual_residual:e})"
    )]
    MaxItersExceeded {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        last: Box<crate::solver::AdmmResult>,
    },

    #[error("infeasible cross-validation split: {0}")]
    InfeasibleSplit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
