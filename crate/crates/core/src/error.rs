use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("chart mismatch: {0}")]
    ChartMismatch(String),

    #[error("no closed-form geodesic distance for {0}")]
    UnsupportedChart(String),

    #[error("metric is not symmetric (max asymmetry {asymmetry:e})")]
    AsymmetricMetric { asymmetry: f64 },

    #[error("metric is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("trajectory diverged at step {step}")]
    Diverged { step: i64 },

    #[error("epsilon schedule is not strictly increasing at step {step} (increment {increment})")]
    NonIncreasingEpsilon { step: i64, increment: f64 },

    #[error("schedule does not cover step {step}")]
    ScheduleTooShort { step: i64 },

    #[error("invalid noise diversity {value} at step {step}")]
    InvalidDiversity { step: i64, value: f64 },

    #[error("pair has zero distance")]
    ZeroDistance,

    #[error("Schur-complement and direct PSD checks disagree (direct {direct}, schur {schur})")]
    RouteDisagreement { direct: bool, schur: bool },

    #[error("hypothesis violated at theta = {theta}: {quantity} = {value} exceeds {bound}")]
    HypothesisViolation {
        theta: f64,
        quantity: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("regulator equations unsolvable (residual {residual:e})")]
    Unsolvable { residual: f64 },

    #[error("malformed interval [{lo}, {hi}]")]
    MalformedInterval { lo: f64, hi: f64 },

    #[error("csv output failed: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of numerical origin (divergence, singular systems,
    /// non-finite arithmetic) as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Diverged { .. }
                | Error::Unsolvable { .. }
                | Error::RouteDisagreement { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
