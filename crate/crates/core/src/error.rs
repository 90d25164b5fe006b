use thiserror::Error;

/// Errors raised by the linear algebra, design, solver and harness layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("information matrix is singular or indefinite")]
    SingularInformationMatrix,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),

    #[error("jacobian provider does not supply control derivatives")]
    MissingJacobianDerivative,

    #[error("starting point is infeasible: {0}")]
    InfeasibleStart(String),

    #[error("feasible set is empty: {0}")]
    EmptyFeasibleSet(String),

    #[error("degenerate quasi-Newton step: s'Bs = {0}")]
    DegenerateStep(f64),

    #[error("line search failed to find an acceptable step")]
    LineSearchFailure,

    #[error("root is not bracketed on [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("no admissible initial guess after {0} draws")]
    FilterExhausted(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
