use svrf_autodiff::AutodiffError;
use thiserror::Error;

use crate::training::LossBreakdown;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),

    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("degenerate look-at: {0}")]
    DegenerateLookAt(String),

    #[error("optical axes do not determine a focus point (condition number {0:e})")]
    SingularFocus(f64),

    #[error("pixel ({x}, {y}) lies outside the {width}x{height} image")]
    PixelOutOfBounds { x: i64, y: i64, width: u32, height: u32 },

    #[error("non-finite value after flow layer {layer}")]
    FlowNonFinite { layer: usize },

    #[error("non-finite loss at iteration {iteration}: {breakdown:?}")]
    NonFiniteLoss {
        iteration: u64,
        breakdown: Box<LossBreakdown>,
    },

    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),

    #[error("corpus yields {found} patches, {required} required")]
    NotEnoughPatches { found: usize, required: usize },

    #[error("no pixels pass the opacity mask")]
    EmptyMask,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { width: usize, height: usize, window: usize },

    #[error("unknown {kind} `{name}`; available: {available}")]
    Unknown {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("png: {0}")]
    Png(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    /// Whether the failure is numerical (non-finite loss, gradient or flow state).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_) | Error::FlowNonFinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
