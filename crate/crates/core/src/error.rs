use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A constructor was handed data violating a type invariant.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// p(a) > 0 where q(a) = 0: the divergence is infinite.
    #[error("support violation: {0}")]
    SupportViolation(String),
    /// Alphabets/labels of two objects do not line up.
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    /// A conditional row is undefined because its marginal vanishes.
    #[error("zero marginal at x = {0}")]
    ZeroMarginal(String),
    /// A partition cell carries no probability mass.
    #[error("zero-mass cell: {0}")]
    ZeroCellMass(String),
    /// Two partitions live on different alphabets.
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    /// A family was applied to an alphabet of the wrong shape.
    #[error("incompatible alphabet: {0}")]
    IncompatibleAlphabet(String),
    /// A custom reference distribution misses part of supp(p).
    #[error("custom reference distribution does not cover supp(p): {0}")]
    CustomSupportViolation(String),
    /// Blahut-Arimoto requires a strictly positive encoder on supp(p).
    #[error("non-interior encoder: {0}")]
    NonInteriorInput(String),
    /// Iteration budget exhausted before the tolerance was met.
    #[error("solver did not converge within {0} iterations")]
    NotConverged(usize),
    /// No bottleneck symbol is free to serve as the dummy target.
    #[error("no bottleneck symbol with zero output mass available")]
    NoFreeSymbol,
    /// Requested divergence level exceeds the attainable maximum.
    #[error("lambda {lambda} exceeds the attainable maximum {lambda_max}")]
    InfeasibleLambda { lambda: f64, lambda_max: f64 },
    /// Group closure grew beyond the allowed size.
    #[error("group closure exceeded max size {0}")]
    SizeExceeded(usize),
    /// An orbit intersecting supp(p) carries no mass.
    #[error("orbit mass zero at index {0}")]
    OrbitMassZero(usize),
    /// A group element moves supp(p) off itself.
    #[error("group does not leave supp(p) invariant: {0}")]
    SupportNotInvariant(String),
    /// Brute-force search would exceed its budget.
    #[error("search budget exceeded: estimated {estimate:.3e} > budget {budget:.3e}")]
    BudgetExceeded { estimate: f64, budget: f64 },
    /// A grid profile produced an invalid conditional row.
    #[error("invalid grid profile: {0}")]
    InvalidProfile(String),
    /// Filesystem or serialization failure while writing artifacts.
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
