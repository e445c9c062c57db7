use thiserror::Error;

pub type Result<T, E = OaisError> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum OaisError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite log-density at sample {index}: {detail}")]
    NonFiniteLogDensity { index: usize, detail: String },

    #[error("non-finite value at index {index} in {what}")]
    NonFiniteValue { what: &'static str, index: usize },

    #[error("degenerate ensemble: every log-weight is -inf")]
    DegenerateEnsemble,

    #[error("estimator {0} is not supported for this target")]
    UnsupportedEstimator(&'static str),

    #[error("quadrature supports dim_x <= 2, got {0}")]
    UnsupportedDimension(usize),

    #[error("integrand does not decay at the quadrature boundary (heavy tail); {detail}")]
    HeavyTail { detail: String },

    #[error("optimizer diverged at iteration {iteration}: |theta| = {norm}")]
    Divergence { iteration: u64, norm: f64 },

    #[error("rate fit failed (residual {residual}): {reason}")]
    FitFailure { residual: f64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl OaisError {
    pub(crate) fn dims(what: &'static str, expected: usize, got: usize) -> Self {
        Self::DimensionMismatch {
            what,
            expected,
            got,
        }
    }
}
