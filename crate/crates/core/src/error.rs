use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain the operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("residual matrix has a nonzero diagonal (max |diag| {0:e})")]
    NonZeroDiagonal(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Data that cannot support the requested statistic, e.g. a constant column.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("residual decomposition has no positive eigenvalues")]
    NoComponents,

    #[error("singular system: {0}")]
    Singular(String),

    /// The joint covariance of the requested cross-moment targets is not PSD.
    #[error("infeasible covariance target: minimum eigenvalue {min_eigenvalue:e}")]
    Infeasible { min_eigenvalue: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
