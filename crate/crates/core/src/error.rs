use alloc::string::String;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller supplied invalid input or parameters.
    Input,
    /// The data are valid but too degenerate to support the estimate.
    Degenerate,
    /// A resampled statistic was undefined too often.
    Unstable,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} must be finite, got {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("{what} = {value} is outside its domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("weighted fit has no point with positive weight")]
    EmptyFit,

    #[error("statistic undefined on {failed} of {replicates} bootstrap replicates")]
    UnstableStatistic { failed: usize, replicates: usize },

    #[error("implied threshold {implied_threshold} gives an undefined cost ratio")]
    UndefinedRatio { implied_threshold: f64 },

    #[error("need at least one positive and one negative truth, got {positives} positive and {negatives} negative")]
    DegenerateClass { positives: u64, negatives: u64 },

    #[error("error rates must lie strictly inside (0, 1), got fpr {fpr} and fnr {fnr}")]
    DegenerateRate { fpr: f64, fnr: f64 },

    #[error("no records with score in [{lower}, {upper}]")]
    EmptyWindow { lower: f64, upper: f64 },

    #[error("{weighted} records with positive weight (need 2) at half-width {halfwidth}; {in_reach} records within reach of the threshold")]
    InsufficientData {
        weighted: usize,
        halfwidth: f64,
        in_reach: usize,
    },

    #[error("unknown grouping dimension `{0}`")]
    UnknownDimension(String),

    #[error("invalid group key: {0}")]
    InvalidGroupKey(String),

    #[error("group `{0}` not present in the data")]
    MissingGroup(String),

    #[error("no threshold/cost parameters for cell `{0}`")]
    MissingCell(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite { .. }
            | Error::Domain { .. }
            | Error::InvalidParameter(_)
            | Error::LengthMismatch { .. }
            | Error::EmptyInput
            | Error::UnknownDimension(_)
            | Error::InvalidGroupKey(_)
            | Error::MissingGroup(_)
            | Error::MissingCell(_) => ErrorKind::Input,
            Error::EmptyFit
            | Error::UndefinedRatio { .. }
            | Error::DegenerateClass { .. }
            | Error::DegenerateRate { .. }
            | Error::EmptyWindow { .. }
            | Error::InsufficientData { .. } => ErrorKind::Degenerate,
            Error::UnstableStatistic { .. } => ErrorKind::Unstable,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}
