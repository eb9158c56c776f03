use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {0} is not supported here (need d >= 3)")]
    DimensionTooSmall(usize),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("Fourier quadrature did not converge (residual estimate {residual:.3e})")]
    FourierNonConvergence { residual: f64 },

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("series tolerance {requested:.3e} unreachable within {max_terms} terms (achieved bound {achieved:.3e})")]
    SeriesTolerance {
        requested: f64,
        achieved: f64,
        max_terms: u64,
    },

    #[error("kernel is not critical: |Ĵ(0) - 1| = {deviation:.3e} exceeds {tolerance:.1e}")]
    NotCritical { deviation: f64, tolerance: f64 },

    #[error("cannot normalize a kernel with Ĵ(0) = {0} <= 0")]
    NonPositiveMass(f64),

    #[error("derived covariance entry {index} is {value:.6e} (must be positive)")]
    NonPositiveSigma { index: usize, value: f64 },

    #[error("infrared bound fails: estimated K_IR = {0:.6e}")]
    InfraredBound(f64),

    #[error("1 - Ĵ(k) is numerically zero at |k| = {0:.6e} away from the origin")]
    SingularDenominator(f64),

    #[error("FFT grid needs {required_mb} MB, over the budget of {budget_mb} MB")]
    MemoryBudget { required_mb: u64, budget_mb: u64 },

    #[error("effective sample size {ess:.1} is below {minimum}")]
    EffectiveSampleSize { ess: f64, minimum: f64 },

    #[error("unsupported problem: {0}")]
    Unsupported(String),
}
