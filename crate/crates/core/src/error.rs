use thiserror::Error;

use crate::model::Compartment;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    /// A modelling assumption violated by a specific config key.
    #[error("{key}: {source}")]
    InvalidKey { key: String, source: ValidationError },
    #[error(transparent)]
    Numerical(#[from] NumericalError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Validation(_) | Error::InvalidKey { .. } => "validation",
            Error::Numerical(_) => "numerical",
            Error::Precondition(_) => "precondition",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

/// A violated modelling assumption. Each assumption maps to its own variant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("sigma must be positive (got {0})")]
    SigmaNotPositive(f64),
    #[error("phi_e must be positive (got {0})")]
    PhiENotPositive(f64),
    #[error("phi_r must be positive (got {0})")]
    PhiRNotPositive(f64),
    #[error("gamma must be nonnegative and finite (step {step}: {value})")]
    WaningNegative { step: usize, value: f64 },
    #[error("gamma has {got} values but the time grid has {expected} steps")]
    WaningLength { expected: usize, got: usize },
    #[error("kappa bounds must satisfy 0 < kappa_lo <= kappa_hi (got [{lo}, {hi}])")]
    KappaBounds { lo: f64, hi: f64 },
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    KappaOutOfBounds {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("initial data must be nonnegative ({compartment} has {value})")]
    InitialNegative { compartment: Compartment, value: f64 },
    #[error("control bound {name} must be nonnegative and finite (got {value})")]
    ControlBoundNegative { name: &'static str, value: f64 },
    #[error("control {name} = {value} violates 0 <= {name} <= {bound}")]
    ControlOutOfBounds {
        name: &'static str,
        value: f64,
        bound: f64,
    },
    #[error("threshold lambda must be positive (got {0})")]
    ThresholdNotPositive(f64),
    #[error("dt * max(gamma) = {product} exceeds 1, which breaks r-positivity of the scheme")]
    WaningStepRestriction { product: f64 },
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericalError {
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDidNotConverge { iterations: usize, residual: f64 },
    #[error("linear system is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("{compartment} dropped to {value:e} at level {level}, below the roundoff floor")]
    PositivityViolation {
        compartment: Compartment,
        level: usize,
        value: f64,
    },
    #[error("non-finite value in {what} at level {level}")]
    NonFinite { what: String, level: usize },
}
