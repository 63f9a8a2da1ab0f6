use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures of the per-step implicit solve.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("step too large for the declared one-sided constant: kappa*delta = {product} exceeds {limit}")]
    StepTooLarge { product: f64, limit: f64 },
    #[error("newton matrix I - delta*Db(y) is singular")]
    LinearSolveFailure,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance factorization failed at pivot {index}: {value:e}")]
    Factorization { index: usize, value: f64 },
    #[error("circulant embedding eigenvalue {index} is {value:e}, below the clipping tolerance")]
    Embedding { index: usize, value: f64 },
    #[error("grid is not nested: time {0} is missing from the source grid")]
    NotNested(f64),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("bound violated at step {step}: |x|^2 = {lhs:e} > {rhs:e}")]
    BoundViolated { step: usize, lhs: f64, rhs: f64 },
    #[error("unknown drift {0:?}")]
    UnknownDrift(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("path {path}, mesh {mesh}: {source}")]
    Experiment {
        path: usize,
        mesh: f64,
        #[source]
        source: Box<Error>,
    },
}
