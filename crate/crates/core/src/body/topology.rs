//! Built-in skeleton topologies.
//!
//! Body-local frame: +x toward the subject's left, +y forward (facing
//! direction), +z up. The root (pelvis) sits at the origin in the rest pose,
//! so the root joint position equals the translation parameter.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for left (positive x), -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// Semantic role of a joint; drives the motion generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "role", content = "side")]
pub enum JointRole {
    Pelvis,
    Spine,
    Neck,
    Head,
    Hip(Side),
    Knee(Side),
    Ankle(Side),
    Foot(Side),
    Collar(Side),
    Shoulder(Side),
    Elbow(Side),
    Wrist(Side),
    Hand(Side),
    Link,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// SMPL's 24-joint tree.
    Smpl24,
    /// 17-joint skeleton (Human3.6M ordering).
    Skeleton17,
    /// Vertical chain of 2..=8 joints for micro experiments.
    Chain,
}

pub(crate) struct JointSpec {
    pub name: &'static str,
    pub parent: Option<usize>,
    pub rest: [f64; 3],
    /// Radius of the capsule on the bone from the parent to this joint.
    pub radius: f64,
    /// Length of the capsule extending past a leaf joint (0 for inner joints).
    pub tip: f64,
    pub role: JointRole,
}

const fn js(
    name: &'static str,
    parent: Option<usize>,
    rest: [f64; 3],
    radius: f64,
    tip: f64,
    role: JointRole,
) -> JointSpec {
    JointSpec {
        name,
        parent,
        rest,
        radius,
        tip,
        role,
    }
}

use JointRole::*;
use Side::{Left as L, Right as R};

const SMPL24: [JointSpec; 24] = [
    js("pelvis", None, [0.0, 0.0, 0.0], 0.0, 0.0, Pelvis),
    js("left_hip", Some(0), [0.09, 0.0, -0.08], 0.11, 0.0, Hip(L)),
    js("right_hip", Some(0), [-0.09, 0.0, -0.08], 0.11, 0.0, Hip(R)),
    js("spine1", Some(0), [0.0, -0.01, 0.11], 0.13, 0.0, Spine),
    js("left_knee", Some(1), [0.10, 0.0, -0.46], 0.07, 0.0, Knee(L)),
    js(
        "right_knee",
        Some(2),
        [-0.10, 0.0, -0.46],
        0.07,
        0.0,
        Knee(R),
    ),
    js("spine2", Some(3), [0.0, 0.0, 0.24], 0.13, 0.0, Spine),
    js(
        "left_ankle",
        Some(4),
        [0.10, -0.02, -0.86],
        0.05,
        0.0,
        Ankle(L),
    ),
    js(
        "right_ankle",
        Some(5),
        [-0.10, -0.02, -0.86],
        0.05,
        0.0,
        Ankle(R),
    ),
    js("spine3", Some(6), [0.0, 0.0, 0.30], 0.14, 0.0, Spine),
    js(
        "left_foot",
        Some(7),
        [0.11, 0.10, -0.91],
        0.04,
        0.06,
        Foot(L),
    ),
    js(
        "right_foot",
        Some(8),
        [-0.11, 0.10, -0.91],
        0.04,
        0.06,
        Foot(R),
    ),
    js("neck", Some(9), [0.0, 0.0, 0.51], 0.06, 0.0, Neck),
    js(
        "left_collar",
        Some(9),
        [0.07, 0.0, 0.42],
        0.07,
        0.0,
        Collar(L),
    ),
    js(
        "right_collar",
        Some(9),
        [-0.07, 0.0, 0.42],
        0.07,
        0.0,
        Collar(R),
    ),
    js("head", Some(12), [0.0, 0.02, 0.62], 0.06, 0.18, Head),
    js(
        "left_shoulder",
        Some(13),
        [0.18, 0.0, 0.44],
        0.06,
        0.0,
        Shoulder(L),
    ),
    js(
        "right_shoulder",
        Some(14),
        [-0.18, 0.0, 0.44],
        0.06,
        0.0,
        Shoulder(R),
    ),
    js(
        "left_elbow",
        Some(16),
        [0.44, 0.0, 0.44],
        0.05,
        0.0,
        Elbow(L),
    ),
    js(
        "right_elbow",
        Some(17),
        [-0.44, 0.0, 0.44],
        0.05,
        0.0,
        Elbow(R),
    ),
    js(
        "left_wrist",
        Some(18),
        [0.70, 0.0, 0.44],
        0.04,
        0.0,
        Wrist(L),
    ),
    js(
        "right_wrist",
        Some(19),
        [-0.70, 0.0, 0.44],
        0.04,
        0.0,
        Wrist(R),
    ),
    js(
        "left_hand",
        Some(20),
        [0.78, 0.0, 0.44],
        0.035,
        0.08,
        Hand(L),
    ),
    js(
        "right_hand",
        Some(21),
        [-0.78, 0.0, 0.44],
        0.035,
        0.08,
        Hand(R),
    ),
];

const SKELETON17: [JointSpec; 17] = [
    js("pelvis", None, [0.0, 0.0, 0.0], 0.0, 0.0, Pelvis),
    js("right_hip", Some(0), [-0.10, 0.0, -0.03], 0.11, 0.0, Hip(R)),
    js(
        "right_knee",
        Some(1),
        [-0.10, 0.0, -0.46],
        0.07,
        0.0,
        Knee(R),
    ),
    js(
        "right_ankle",
        Some(2),
        [-0.10, -0.02, -0.88],
        0.05,
        0.10,
        Ankle(R),
    ),
    js("left_hip", Some(0), [0.10, 0.0, -0.03], 0.11, 0.0, Hip(L)),
    js("left_knee", Some(4), [0.10, 0.0, -0.46], 0.07, 0.0, Knee(L)),
    js(
        "left_ankle",
        Some(5),
        [0.10, -0.02, -0.88],
        0.05,
        0.10,
        Ankle(L),
    ),
    js("spine", Some(0), [0.0, 0.0, 0.23], 0.13, 0.0, Spine),
    js("thorax", Some(7), [0.0, 0.0, 0.47], 0.14, 0.0, Spine),
    js("neck", Some(8), [0.0, 0.01, 0.55], 0.06, 0.0, Neck),
    js("head", Some(9), [0.0, 0.02, 0.68], 0.09, 0.12, Head),
    js(
        "left_shoulder",
        Some(8),
        [0.17, 0.0, 0.45],
        0.07,
        0.0,
        Shoulder(L),
    ),
    js(
        "left_elbow",
        Some(11),
        [0.43, 0.0, 0.45],
        0.05,
        0.0,
        Elbow(L),
    ),
    js(
        "left_wrist",
        Some(12),
        [0.69, 0.0, 0.45],
        0.04,
        0.10,
        Wrist(L),
    ),
    js(
        "right_shoulder",
        Some(8),
        [-0.17, 0.0, 0.45],
        0.07,
        0.0,
        Shoulder(R),
    ),
    js(
        "right_elbow",
        Some(14),
        [-0.43, 0.0, 0.45],
        0.05,
        0.0,
        Elbow(R),
    ),
    js(
        "right_wrist",
        Some(15),
        [-0.69, 0.0, 0.45],
        0.04,
        0.10,
        Wrist(R),
    ),
];

const CHAIN_LINK: f64 = 0.25;

pub(crate) fn joint_specs(n_joints: usize) -> Option<(TopologyKind, Vec<JointSpec>)> {
    match n_joints {
        24 => Some((TopologyKind::Smpl24, SMPL24.into_iter().collect())),
        17 => Some((TopologyKind::Skeleton17, SKELETON17.into_iter().collect())),
        2..=8 => {
            let specs = (0..n_joints)
                .map(|j| {
                    let leaf = j + 1 == n_joints;
                    js(
                        "link",
                        j.checked_sub(1),
                        [0.0, 0.0, j as f64 * CHAIN_LINK],
                        if j == 0 { 0.0 } else { 0.08 },
                        if leaf { 0.15 } else { 0.0 },
                        if j == 0 { Pelvis } else { Link },
                    )
                })
                .collect();
            Some((TopologyKind::Chain, specs))
        }
        _ => None,
    }
}
