//! Evaluation metrics: rotations in degrees, distances in centimeters.

use super::HarnessError;
use crate::body::{geodesic_distance, rot6d_to_matrix};

fn same_len(what: &str, a: usize, b: usize, unit: usize) -> Result<usize, HarnessError> {
    if a != b || !a.is_multiple_of(unit) {
        return Err(HarnessError::Dimension {
            what: what.into(),
            expected: a,
            got: b,
        });
    }
    if a == 0 {
        return Err(HarnessError::Contract(format!(
            "{what}: nothing to compare"
        )));
    }
    Ok(a / unit)
}

fn mean_distance_cm(what: &str, pred: &[f64], truth: &[f64]) -> Result<f64, HarnessError> {
    let n = same_len(what, pred.len(), truth.len(), 3)?;
    let total: f64 = pred
        .chunks_exact(3)
        .zip(truth.chunks_exact(3))
        .map(|(p, t)| {
            ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2) + (p[2] - t[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(100.0 * total / n as f64)
}

/// Mean geodesic angle (degrees) between per-joint 6D rotations, over
/// every joint of every frame.
pub fn metric_mpjre(pred_theta: &[f64], true_theta: &[f64]) -> Result<f64, HarnessError> {
    let n = same_len("joint rotations", pred_theta.len(), true_theta.len(), 6)?;
    let mut total = 0.0;
    for (p, t) in pred_theta.chunks_exact(6).zip(true_theta.chunks_exact(6)) {
        let rp = rot6d_to_matrix(p.try_into().expect("6 values"))?;
        let rt = rot6d_to_matrix(t.try_into().expect("6 values"))?;
        total += geodesic_distance(&rp, &rt);
    }
    Ok((total / n as f64).to_degrees())
}

/// Mean per-joint position error, cm. Inputs are flat `x, y, z` triples.
pub fn metric_mpjpe(pred_joints: &[f64], true_joints: &[f64]) -> Result<f64, HarnessError> {
    mean_distance_cm("joint positions", pred_joints, true_joints)
}

/// Mean per-vertex position error, cm.
pub fn metric_mpvpe(pred_vertices: &[f64], true_vertices: &[f64]) -> Result<f64, HarnessError> {
    mean_distance_cm("vertex positions", pred_vertices, true_vertices)
}

/// Mean error of the root joint (joint 0 of each frame), cm.
pub fn metric_mte(
    pred_joints: &[f64],
    true_joints: &[f64],
    n_joints: usize,
) -> Result<f64, HarnessError> {
    let frames = same_len(
        "joint positions",
        pred_joints.len(),
        true_joints.len(),
        3 * n_joints.max(1),
    )?;
    let roots = |j: &[f64]| {
        (0..frames)
            .flat_map(|f| j[f * n_joints * 3..f * n_joints * 3 + 3].to_vec())
            .collect::<Vec<_>>()
    };
    mean_distance_cm("root positions", &roots(pred_joints), &roots(true_joints))
}

/// Mean error of the predicted translations against the true root, cm.
pub fn metric_mpte(pred_roots: &[[f64; 3]], true_roots: &[[f64; 3]]) -> Result<f64, HarnessError> {
    mean_distance_cm(
        "root translations",
        pred_roots.as_flattened(),
        true_roots.as_flattened(),
    )
}
