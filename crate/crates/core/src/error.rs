use thiserror::Error;

/// Errors raised by the conformal selection engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModselError {
    #[error("clamp bounds out of order: lo={lo} > hi={hi}")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error("outer function of a composition must be nondecreasing")]
    NotMonotone,

    #[error("malformed piecewise-linear function: {0}")]
    MalformedPwl(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty input")]
    Empty,

    #[error("invalid model class: {0}")]
    InvalidModelClass(String),

    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("operation requires a continuous score family")]
    NeedsContinuous,

    #[error("operation requires a finite label space")]
    NeedsDiscrete,

    #[error("response kind does not match the score family")]
    ResponseMismatch,

    #[error("split size n1={n1} must satisfy 1 <= n1 < n={n}")]
    InvalidSplit { n1: usize, n: usize },

    #[error("cannot compare regions of different kinds")]
    MixedRegions,

    #[error("grid must have a positive step and lo <= hi")]
    EmptyGrid,

    #[error("cannot parse region from {0:?}")]
    RegionParse(String),
}

pub type Result<T> = std::result::Result<T, ModselError>;
