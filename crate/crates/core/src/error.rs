use thiserror::Error;

/// Errors raised by model construction, simulation and estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("window mismatch: {0}")]
    WindowMismatch(String),

    #[error("index set D_n is empty")]
    EmptyDomain,

    #[error("region is not contained in the index set: {0}")]
    RegionOutsideDomain(String),

    #[error("degenerate spectral measure: E(Theta_0)_+^kappa = 0")]
    DegenerateSpectral,

    #[error("no sign change of E A^kappa - 1 on (0, {upper}]; the tail-index condition is unmet")]
    KappaConditionUnmet { upper: f64 },

    #[error("no exceedances above the selected level")]
    NoExceedances,

    #[error("extremal functional unavailable: {0}")]
    MissingEta(String),

    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
