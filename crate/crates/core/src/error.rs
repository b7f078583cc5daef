use thiserror::Error;

/// Errors raised by the measure, bound and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state-space mismatch: expected {expected} states, found {found}")]
    StateSpaceMismatch { expected: usize, found: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("empty function class")]
    EmptyClass,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid loss function: {0}")]
    InvalidFunction(String),

    #[error("convex-parametric class is not convex in the parameter: member {member}, state {state}")]
    NonConvexClass { member: usize, state: usize },

    #[error("invalid tabulation: {0}")]
    InvalidTabulation(String),

    #[error("conjugate requires convexity")]
    ConjugateRequiresConvexity,

    #[error("negative values are not allowed: {0}")]
    NegativeValues(String),

    #[error("peeling constraint violated: q*eps = {0} must be < 1")]
    PeelingConstraint(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
