//! Procedural SMPL-style body model.
//!
//! Pose is given per joint as a 6D rotation relative to the parent joint,
//! shape as coefficients on linear blend directions, and translation as the
//! world position offset of the root.

mod diff;
mod kinematics;
mod rotation;
mod template;
mod topology;

pub use diff::{geodesic_graph, rot6d_graph, BodyGraph, GraphBodyOutput};
pub use kinematics::{
    body_forward, forward_kinematics, skin_vertices, BodyOutput, BodyParams, Kinematics, Pose,
};
pub use rotation::{
    axis_angle, geodesic_distance, matrix_to_rot6d, rot6d_to_matrix, rot_x, rot_y, rot_z,
    DEGENERATE_NORM, GEODESIC_CLAMP, IDENTITY_6D,
};
pub use template::{make_template, BodyTemplate, TemplateSpec};
pub use topology::{JointRole, Side, TopologyKind};

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum BodyError {
    #[error("invalid body configuration: {0}")]
    Config(String),
    #[error("degenerate 6D rotation (norm {norm:e})")]
    DegenerateRotation { norm: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("template JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
