use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not hermitian within tolerance (asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {min:e}, threshold {threshold:e})")]
    NotPsd { min: f64, threshold: f64 },
    #[error("matrix is not positive definite")]
    NotPd,
    #[error("non-finite entry in {0}")]
    NonFinite(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("dominant eigenvector has non-positive entry {0:e}")]
    DegenerateEigenvector(f64),
    #[error("linear system is singular (condition estimate {0:e})")]
    SingularSystem(f64),
    #[error("hop {0} carries zero penalty power")]
    ZeroHopPower(usize),
    #[error("dual interference-plus-noise of link {0} is singular")]
    SingularDualOmega(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("subproblem failed: {0}")]
    Subproblem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
