use thiserror::Error;

/// Errors raised by mask construction, simulation, and the numeric oracle.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GnaError {
    #[error("rank {0} is not supported (expected 1 to 3 axes)")]
    InvalidRank(usize),

    #[error("rank mismatch for {what}: expected {expected}, found {found}")]
    RankMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} must be positive on axis {axis}")]
    ZeroValue { what: &'static str, axis: usize },

    #[error("axis {axis}: stride exceeds window ({stride} > {window}); larger strides leave holes in attention")]
    StrideExceedsWindow { axis: usize, stride: usize, window: usize },

    #[error("axis {axis}: window×dilation exceeds extent ({window}×{dilation} > {extent})")]
    WindowExceedsExtent {
        axis: usize,
        window: usize,
        dilation: usize,
        extent: usize,
    },

    #[error("axis {axis}: window-left {left} must be smaller than window {window}")]
    WindowLeftOutOfRange { axis: usize, left: usize, window: usize },

    #[error("axis {axis}: coordinate {value} out of bounds for extent {extent}")]
    CoordOutOfBounds { axis: usize, value: usize, extent: usize },

    #[error("index {index} out of range for {len} elements")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{what}: {tokens} tokens exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        tokens: usize,
        cap: usize,
    },

    #[error("{0}")]
    UnsupportedMode(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("row {row} has no unmasked keys")]
    FullyMaskedRow { row: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} must be positive")]
    NonPositive(&'static str),

    #[error("invalid workload model: {0}")]
    InvalidModel(String),
}

pub type Result<T> = std::result::Result<T, GnaError>;
