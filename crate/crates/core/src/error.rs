use thiserror::Error;

/// Errors raised by sampling, estimation and the asymptotic calculus.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("empty observed sample: no latent pair satisfied x <= y")]
    EmptySample,

    #[error("invalid observation at row {row}: {reason}")]
    InvalidObservation { row: usize, reason: String },

    #[error("k must be >= 2 and <= n - 1 (got k = {k}, n = {n})")]
    KOutOfRange { k: usize, n: usize },

    #[error("index j = {j} out of range for a sample of size {n}")]
    IndexOutOfRange { j: usize, n: usize },

    #[error("all log-spacings above the threshold are zero (tied top order statistics)")]
    DegenerateTies,

    #[error("GS estimator undefined: zero denominator at k = {k}")]
    GsUndefined { k: usize },

    #[error("estimator failed for every k in [{k_min}, {k_max}]")]
    NoValidK { k_min: usize, k_max: usize },

    #[error("non-integrable singularity in {what}: {detail}")]
    NonIntegrable { what: &'static str, detail: String },

    #[error("quadrature did not converge: estimated error {error:e} after {intervals} intervals")]
    QuadratureFailed { error: f64, intervals: usize },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("every replicate of the cell failed")]
    CellFailed,

    #[error("config line {line}, key `{key}`: {reason}")]
    Config { line: usize, key: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
