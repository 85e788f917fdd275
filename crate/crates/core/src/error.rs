use alloc::string::String;

/// Errors produced by the calibration pipeline and its building blocks.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no target detected: {0}")]
    NoTargetDetected(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("sphere fit failed: best inlier ratio {best_inlier_ratio:.3} below {required:.3}")]
    FitFailed { best_inlier_ratio: f64, required: f64 },

    #[error("ambiguous ordering: projections closer than {tolerance} m")]
    AmbiguousOrdering { tolerance: f64 },

    #[error("insufficient clusters: found {found}, need at least {required}")]
    InsufficientClusters { found: usize, required: usize },

    #[error("radar localization failed: best energy {energy:.6} above {threshold:.6} ({detail})")]
    LocalizationFailed {
        energy: f64,
        threshold: f64,
        detail: String,
    },

    #[error("insufficient correspondences: found {found}, need at least {required}")]
    InsufficientCorrespondences { found: usize, required: usize },

    #[error("scene error: {0}")]
    Scene(String),
}

impl Error {
    pub(crate) fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
