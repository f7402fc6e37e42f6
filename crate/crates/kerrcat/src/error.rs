use thiserror::Error;

pub type Result<T> = std::result::Result<T, KerrcatError>;

/// Every failure the library can report. The CLI maps these onto exit codes
/// through [`KerrcatError::is_fit_failure`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KerrcatError {
    #[error("invalid dimension {0} (need at least 2)")]
    InvalidDimension(usize),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: String, reason: String },
    #[error("g3 is zero; the Stark term needs it unless omission is acknowledged")]
    MissingStarkInput,
    #[error("parity mixing at eigenstate {index}: <P> = {parity:.6}")]
    ParityMixing { index: usize, parity: f64 },
    #[error("isoline bracket has no sign change: {0}")]
    BracketFailure(String),
    #[error("splitting is not monotone over the isoline bracket")]
    AmbiguousIsoline,
    #[error("propagation failure: {0}")]
    PropagationFailure(String),
    #[error("trace drift {drift:.3e} exceeds bound; reduce the step size")]
    StepSizeTooLarge { drift: f64 },
    #[error("non-unique steady state: {0}")]
    NonUniqueSteadyState(String),
    #[error("ambiguous decay mode: overlaps {first:.4} and {second:.4} within 10%")]
    AmbiguousMode { first: f64, second: f64 },
    #[error("eigenbasis truncation of {0} states is below the minimum of 8")]
    TruncationTooSmall(usize),
    #[error("population never crosses 1/e within the sampled window")]
    NoCrossing,
    #[error("pulse bandwidth overlaps two transitions: |w01 - w12| = {separation:.4e} rad/s < 3/sigma = {limit:.4e}")]
    SelectivityViolation { separation: f64, limit: f64 },
    #[error("inversion out of range: p{index} = {value:.4} (sigma {sigma:.4})")]
    InversionOutOfRange { index: usize, value: f64, sigma: f64 },
    #[error("conditional probability undefined: no shots classified as {0}")]
    UndefinedConditional(String),
    #[error("no threshold found in the scanned eps2 range")]
    NoThreshold,
    #[error("fit failure: {0}")]
    Fit(String),
    #[error("Monte-Carlo propagation unreliable: {failed} of {total} solver calls failed")]
    PropagationUnreliable { failed: usize, total: usize },
}

impl KerrcatError {
    pub fn is_fit_failure(&self) -> bool {
        matches!(self, KerrcatError::Fit(_) | KerrcatError::PropagationUnreliable { .. })
    }

    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        KerrcatError::InvalidParams { field: field.to_string(), reason: reason.into() }
    }
}
