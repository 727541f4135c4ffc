//! Training loop, evaluation metrics, checkpoints and experiment reports.

mod checkpoint;
mod config;
mod evaluate;
mod metrics;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use config::{fingerprint, TrainConfig};
pub use evaluate::{
    evaluate, reset_translation_head, Estimator, EvalOptions, EvalOutput, FrameDump,
    GroundTruthEstimator, MetricsReport, NetEstimator, SequenceMetrics, ShapeAveragedMetrics,
    WindowEstimate,
};
pub use metrics::{metric_mpjpe, metric_mpjre, metric_mpte, metric_mpvpe, metric_mte};
pub use train::{loss_csv, train, LabeledSequence, StepRecord, TrainOutcome, Trainer};

use crate::autodiff::AutodiffError;
use crate::body::BodyError;
use crate::net::NetError;
use crate::radar::RadarError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
