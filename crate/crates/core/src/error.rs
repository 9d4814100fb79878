use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expected a square matrix, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix is not hermitian")]
    NotHermitian,
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, norm {norm:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, norm: f64 },
    #[error("not an orthogonal projection: {0}")]
    NotProjection(String),
    #[error("element lies outside the ambient algebra (residual {residual:e})")]
    OutsideAmbient { residual: f64 },
    #[error("projection is not invariant for the algebra (defect {defect:e})")]
    NotInvariant { defect: f64 },
    #[error("projections are not ordered: {0}")]
    NotOrdered(String),
    #[error("not a nest: {0}")]
    NotANest(String),
    #[error("lattice closure exceeded {cap} elements without reaching a fixed point; non-commutative lattice suspected")]
    NonCslSuspected { cap: usize },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
