use thiserror::Error;

/// Errors produced anywhere in the verification pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular matrix (pivot magnitude {pivot:e})")]
    SingularMatrix { pivot: f64 },
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex stalled even under Bland's rule")]
    CycleDetected,
    #[error("polytope is empty")]
    EmptyInput,
    #[error("activation pattern is not realizable")]
    EmptyRegion,
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("rank condition violated: {0}")]
    RankDeficient(String),
    #[error("input set is unbounded along coordinate {0}")]
    UnboundedInput(usize),
    #[error("pattern count overflows: {neurons} hidden neurons")]
    Overflow { neurons: usize },
    #[error("stability set is empty")]
    EmptyStabilitySet,
    #[error("network has {neurons} hidden neurons, cap is {cap}")]
    TooManyNeurons { neurons: usize, cap: usize },
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
