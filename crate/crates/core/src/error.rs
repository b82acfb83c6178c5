use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported size: {what} = {got} exceeds limit {limit}")]
    UnsupportedSize { what: &'static str, got: usize, limit: usize },

    #[error("invalid mapping: {0}")]
    InvalidMapping(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error in {context}: {message}")]
    Validation { context: String, message: String },

    #[error("decode error in field `{field}`: {message}")]
    Decode { field: String, message: String },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("divisibility error: {0}")]
    Divisibility(String),

    #[error("incompatible architectures: {0}")]
    IncompatibleArch(String),

    #[error("no feasible architecture under {budget_gflops} GFLOPs after {attempts} attempts")]
    InfeasibleBudget { budget_gflops: f64, attempts: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("coefficient undefined: {0}")]
    UndefinedCoefficient(String),

    #[error("evaluator failed: {0}")]
    Evaluator(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Evaluator(_) | Error::InfeasibleBudget { .. })
    }
}
