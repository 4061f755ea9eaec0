//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("raster dimensions must be positive, got {height}x{width}x{channels}")]
    InvalidDimensions {
        height: usize,
        width: usize,
        channels: usize,
    },

    #[error("data length {actual} does not match {height}x{width}x{channels} = {expected}")]
    DataLength {
        expected: usize,
        actual: usize,
        height: usize,
        width: usize,
        channels: usize,
    },

    #[error("raster extents differ: {expected_height}x{expected_width} vs {actual_height}x{actual_width}")]
    ShapeMismatch {
        expected_height: usize,
        expected_width: usize,
        actual_height: usize,
        actual_width: usize,
    },

    #[error("expected {expected} channel(s), got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("mask values must be 0 or 1, found {0}")]
    NotBinary(u8),

    #[error("label {0} not present in instance map")]
    UnknownLabel(u32),

    #[error("image must be at least 3x3 for gradient filtering, got {height}x{width}")]
    ImageTooSmall { height: usize, width: usize },

    #[error("degenerate histogram: every pixel has intensity {0}")]
    DegenerateHistogram(u8),

    #[error("instance label {0} has no class assignment")]
    MissingClass(u32),

    #[error("layer label {0} outside the valid range 0..=4")]
    InvalidLayerLabel(u8),

    #[error("marker labelled {label} at ({row}, {col}) lies outside the foreground")]
    MarkerOutsideForeground { label: u32, row: usize, col: usize },

    #[error("placed {placed} of {requested} nuclei before exhausting {attempts} attempts")]
    PlacementFailed {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("patch size {patch} exceeds image extent {height}x{width}")]
    PatchLargerThanImage {
        patch: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

impl Error {
    /// Builds a `ShapeMismatch` from two (height, width) extents.
    pub fn shape_mismatch(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            expected_height: expected.0,
            expected_width: expected.1,
            actual_height: actual.0,
            actual_width: actual.1,
        }
    }
}
