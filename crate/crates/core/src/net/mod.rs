//! The radar body network: per-frame point backbone, bidirectional GRU over
//! the window, translation predictor, coarse skeleton head, joint-token
//! attention and the body-parameter regressor, plus the training losses.

mod backbone;
mod config;
mod crop;
mod gru;
mod heads;
mod loss;
mod model;
mod nn;
mod sampling;

pub use backbone::{Backbone, GlobalAggregation, SetAbstraction, StageOutput};
pub use config::{LossScales, NetConfig, SaStage};
pub use crop::{crop_window, CropSource, ProcessedSequence};
pub use gru::{BiGru, GruCell};
pub use heads::{AttentionOutput, MultiHeadAttention, ParamRegressor, RegressedParams};
pub use loss::{compute_losses, LossReport, LossTargets, Losses};
pub use model::{MmBat, ModelOutput};
pub use nn::{Ctx, Init, Linear, Mlp};
pub use sampling::{ball_query, farthest_point_sample, nearest_to_centroid};

use crate::autodiff::AutodiffError;
use crate::body::BodyError;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

impl NetError {
    /// Folds the error into the autodiff error type, for closures that must
    /// return one (gradient checks).
    pub fn into_autodiff(self) -> AutodiffError {
        match self {
            NetError::Autodiff(e) => e,
            NetError::Body(BodyError::Autodiff(e)) => e,
            other => AutodiffError::Contract(other.to_string()),
        }
    }
}
