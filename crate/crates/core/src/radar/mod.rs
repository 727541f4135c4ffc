//! Synthetic mmWave radar: body motion, per-frame point-cloud rendering,
//! the `MMRD` dataset format and dataset diagnostics.
//!
//! Radar coordinates: radar at the origin, +x lateral, +y depth along the
//! boresight, +z up. The floor plane is `z = -1`.

mod dataset;
mod inspect;
mod motion;
mod render;
mod simulate;

pub use dataset::{
    decode, encode, read_dataset, write_dataset, GroundTruth, RawSequence, FORMAT_VERSION, MAGIC,
};
pub use inspect::{inspect, DopplerHistogram, InspectReport};
pub use motion::{generate_motion, MotionConfig, MotionKind, MotionModel, FLOOR_Z};
pub use render::{
    radial_velocity, render_frame, Aabb, MirrorPlane, NoiseConfig, PointFrame, CHANNELS,
};
pub use simulate::{read_sidecar, simulate_sequence, write_sidecar, SimulationConfig};

use crate::body::BodyError;

#[derive(Debug, thiserror::Error)]
pub enum RadarError {
    #[error("invalid simulator configuration: {0}")]
    Config(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("dataset format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
