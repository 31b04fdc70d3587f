use std::io;

use crate::spike::PixelCoord;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("zero dimension in header or constructor")]
    ZeroDimension,

    #[error("clock period must be positive")]
    InvalidClockPeriod,

    #[error("pixel ({x}, {y}) or time range out of bounds")]
    OutOfBounds { x: usize, y: usize },

    #[error("window is empty after clipping to the stream")]
    EmptyWindow,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{} pixel(s) have fewer than two spikes", .0.len())]
    InsufficientSpikes(Vec<PixelCoord>),

    #[error("dark interval {t_d} does not exceed lit interval {t1} at pixel ({}, {})", .pixel.x, .pixel.y)]
    DegenerateInterval {
        pixel: PixelCoord,
        t_d: f64,
        t1: f64,
    },

    #[error("trace does not match layer configuration: {0}")]
    TraceMismatch(String),

    #[error("rendered intensity {0} is negative")]
    NegativeIntensity(f64),

    #[error("negative density {0}")]
    NegativeDensity(f64),

    #[error("activation cache does not match: {0}")]
    CacheMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dataset has no training views")]
    DatasetEmpty,

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },

    #[error("{steps} steps are not divisible by {subframes} subframes")]
    IndivisibleSteps { steps: usize, subframes: usize },

    #[error("image too small for the metric window: {0}")]
    TooSmall(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
