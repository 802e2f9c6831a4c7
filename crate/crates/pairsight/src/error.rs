use std::path::PathBuf;

use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel ({px}, {py}) is outside the declared {context}")]
    PixelOutsideArm { px: u16, py: u16, context: String },

    #[error("event stream is not sorted by time (index {index})")]
    UnsortedEvents { index: usize },

    #[error("histogram holds {total} counts, below the required floor of {floor}")]
    InsufficientData { total: f64, floor: f64 },

    #[error("bin widths must be positive, got ({bin_u}, {bin_v})")]
    InvalidBinWidth { bin_u: f64, bin_v: f64 },

    #[error("accidental shift of {shift_ns} ns is below 10x the window of {delta_t_ns} ns")]
    ShiftTooSmall { shift_ns: f64, delta_t_ns: f64 },

    #[error("histogram geometries differ: {0}")]
    GeometryMismatch(String),

    #[error("adjacent-frame accidental estimation needs at least 2 frames, got {0}")]
    TooFewFrames(usize),

    #[error("fit amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),

    #[error("width estimates mix methods {0:?} and {1:?}")]
    MixedMethods(
        crate::estimators::WidthMethod,
        crate::estimators::WidthMethod,
    ),

    #[error("background region keeps only {kept} bins, need at least {needed}")]
    BackgroundRegionTooSmall { kept: usize, needed: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
