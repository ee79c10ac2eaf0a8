use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis pipeline.
///
/// Per-frame failures (`NoNucleusFound`, `ContourExtractionFailed`,
/// `RegistrationDiverged`) are recoverable: the pipeline flags the frame and
/// continues. Stack-level failures (`StackRejected`, `NormalizationFailed`)
/// abort the affected stack only.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode TIFF {path}: {message}")]
    TiffDecode { path: PathBuf, message: String },

    #[error("failed to encode TIFF {path}: {message}")]
    TiffEncode { path: PathBuf, message: String },

    #[error("unsupported image format in {path}: {message}")]
    UnsupportedFormat { path: PathBuf, message: String },

    #[error("page count {pages} inconsistent with layout `{layout}`")]
    LayoutMismatch { pages: usize, layout: String },

    #[error("empty frame selection for projection")]
    EmptySelection,

    #[error("degenerate histogram: all pixels fall into a single bin")]
    DegenerateHistogram,

    #[error("no nucleus found: no component with area >= {min_area} px")]
    NoNucleusFound { min_area: usize },

    #[error("contour extraction failed: {valid} of {total} angle rows valid")]
    ContourExtractionFailed { valid: usize, total: usize },

    #[error("registration diverged: overlap {overlap_frac:.3} below minimum {min_frac:.3}")]
    RegistrationDiverged { overlap_frac: f64, min_frac: f64 },

    #[error("no peak found in column intensity profile")]
    NoPeakFound,

    #[error("ROI does not intersect the nucleus mask")]
    EmptyRoiIntersection,

    #[error("cannot write empty curve")]
    EmptyCurve,

    #[error("normalization failed: pre-irradiation quotient {q0} is not positive")]
    NormalizationFailed { q0: f64 },

    #[error("stack rejected: {reason}")]
    StackRejected { reason: String },

    #[error("invalid phantom spec: {0}")]
    InvalidPhantomSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
