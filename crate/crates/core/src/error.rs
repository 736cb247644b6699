use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The state has (numerically) zero norm, e.g. a detection branch that
    /// occurs with probability zero.
    #[error("zero-norm state: squared norm {norm_sqr:e} is below the degeneracy floor")]
    ZeroState { norm_sqr: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// An eigenvalue of a density fell below the clamp tolerance (or above one
    /// by more than the tolerance).
    #[error("positivity violation: eigenvalue {eigenvalue:e} outside [0, 1]")]
    PositivityViolation { eigenvalue: f64 },

    #[error("trace violation: trace {trace} differs from 1")]
    TraceViolation { trace: f64 },

    #[error("degenerate preparation: {0}")]
    DegeneratePreparation(String),

    #[error("truncation error: n_max = {n_max} but at least {required} is needed")]
    Truncation { n_max: usize, required: usize },

    #[error("capacity exceeded: dimension {dimension} > {limit}")]
    Capacity { dimension: usize, limit: usize },

    #[error("unsupported input: {0}")]
    UnsupportedInput(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
