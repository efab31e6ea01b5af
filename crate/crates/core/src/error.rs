//! Error type shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by panel construction, smoothing, fitting, bandwidth
/// selection, inference, and ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "empty or degenerate smoothing window at {} of {total} evaluation point(s) \
         (first offender x = {}); consider enlarging the bandwidth {bandwidth}",
        .offenders.len(),
        .offenders.first().copied().unwrap_or(f64::NAN)
    )]
    EmptyWindow {
        offenders: Vec<f64>,
        total: usize,
        bandwidth: f64,
    },

    #[error("all pooling weights are zero")]
    AllZeroWeights,

    #[error(
        "fitted curve is numerically constant over the design of individual {individual}; \
         the scale parameter is not identified"
    )]
    DegenerateCurve { individual: usize },

    #[error("non-finite value produced during {context}")]
    NonFinite { context: String },

    #[error("x = {x} lies outside the curve range [{lo}, {hi}]; extrapolation is not supported")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("invalid fold count {folds} for {individuals} individuals (need 2 <= folds <= n)")]
    InvalidFolds { folds: usize, individuals: usize },

    #[error("no bandwidth pair produced a valid cross-validation average")]
    AllCellsInvalid,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate m/z value within individual {id}")]
    NonMonotonic { id: String },

    #[error(
        "individual {id} covers only {coverage:.1}% of the reference grid (need at least 90%)"
    )]
    InsufficientOverlap { id: String, coverage: f64 },

    #[error("reference individual {id} not present in the input")]
    MissingReference { id: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
