//! Error type shared by the whole crate.
//!
//! Every failure carries a stable category name so the command-line tools can
//! emit one machine-parsable diagnostic line per failure.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A scene point's round trip does not fit in the temporal window.
    #[error(
        "scene point {index} needs a round trip of {required_m:.4} m one-way but the volume only \
         covers {available_m:.4} m"
    )]
    OutOfRange {
        index: usize,
        required_m: f64,
        available_m: f64,
    },

    #[error("snr of {snr_db} dB yields a non-finite background rate")]
    InvalidSnr { snr_db: f64 },

    #[error("spectral window retains {kept} of {total} bins; at least 3 are required")]
    DegenerateWindow { kept: usize, total: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("reconstruction depth range must start above the wall plane, got z_min = {z_min_m} m")]
    NonPositiveDepth { z_min_m: f64 },

    #[error("crop fraction {fraction} leaves no pixels")]
    DegenerateCrop { fraction: f64 },

    #[error("image {nx}x{ny} is smaller than the 11x11 ssim window")]
    TooSmall { nx: usize, ny: usize },

    #[error("depth error mask selects no pixels")]
    EmptyMask,

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("bad magic bytes; not an NTV file")]
    BadMagic,

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },

    #[error("unsupported format version {version}")]
    VersionUnsupported { version: u32 },

    #[error("{path}:{line}: {message}")]
    SceneParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable category label used in CLI diagnostics and exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::InvalidSnr { .. } => "InvalidSnr",
            Error::DegenerateWindow { .. } => "DegenerateWindow",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonPositiveDepth { .. } => "NonPositiveDepth",
            Error::DegenerateCrop { .. } => "DegenerateCrop",
            Error::TooSmall { .. } => "TooSmall",
            Error::EmptyMask => "EmptyMask",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::BadMagic => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::VersionUnsupported { .. } => "VersionUnsupported",
            Error::SceneParse { .. } => "SceneParse",
            Error::Io(_) => "IoError",
        }
    }
}

pub(crate) fn shape_mismatch(context: impl Into<String>) -> Error {
    Error::ShapeMismatch(context.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_are_stable() {
        assert_eq!(Error::BadMagic.category(), "BadMagic");
        assert_eq!(Error::EmptyMask.category(), "EmptyMask");
        assert_eq!(
            Error::TruncatedFile {
                expected: 10,
                actual: 9
            }
            .category(),
            "TruncatedFile"
        );
    }
}
