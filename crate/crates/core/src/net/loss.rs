//! Training losses. Every L1 term is the per-item L1 norm averaged over
//! items (a joint, a vertex, or a frame's parameter vector), so the scale
//! factors do not depend on T, N_J or the batch size.

use serde::{Deserialize, Serialize};

use super::config::LossScales;
use super::model::ModelOutput;
use super::NetError;
use crate::autodiff::{Graph, Var};
use crate::body::{geodesic_graph, rot6d_to_matrix};

/// Ground truth for one batch, flattened in the model's frame order.
#[derive(Clone, Debug, Default)]
pub struct LossTargets {
    /// Root translations of the following window, `B·T × 3`.
    pub gamma_next: Option<Vec<f64>>,
    /// `B·T × N_J × 3`
    pub joints: Option<Vec<f64>>,
    /// `B·T × 6·N_J`
    pub theta: Option<Vec<f64>>,
    /// `B·T × N_β`
    pub beta: Option<Vec<f64>>,
    /// `B·T × 3`
    pub gamma: Option<Vec<f64>>,
    /// `B·T × N_V × 3`
    pub vertices: Option<Vec<f64>>,
}

/// Raw term values plus the two scaled compositions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_pred: f64,
    pub l_joint: f64,
    pub l_theta: f64,
    pub l_beta: f64,
    pub l_gamma: f64,
    pub l_j: f64,
    pub l_m: f64,
    pub l_smpl: f64,
    pub l_total: f64,
}

pub struct Losses {
    pub report: LossReport,
    /// Scalar node of `l_total`, for the backward pass.
    pub total: Var,
}

fn target(g: &mut Graph, value: &Option<Vec<f64>>, name: &str, like: Var) -> Result<Var, NetError> {
    let v = value
        .as_ref()
        .ok_or_else(|| NetError::Contract(format!("ground truth for {name} is missing")))?;
    let shape = g.shape(like).to_vec();
    if v.len() != shape.iter().product::<usize>() {
        return Err(NetError::Contract(format!(
            "ground truth for {name} has {} values, prediction is {shape:?}",
            v.len()
        )));
    }
    Ok(g.constant_from(&shape, v.clone())?)
}

/// Mean over rows of the L1 norm along the last axis.
fn mean_l1(g: &mut Graph, pred: Var, truth: Var) -> Result<Var, NetError> {
    let shape = g.shape(pred).to_vec();
    let last = *shape.last().expect("rank >= 1");
    let rows = shape.iter().product::<usize>() / last.max(1);
    let d = g.sub(pred, truth)?;
    let d = g.abs(d);
    let d = g.reshape(d, &[rows, last])?;
    let per_item = g.sum_axis(d, 1, false)?;
    Ok(g.mean(per_item))
}

pub fn compute_losses(
    g: &mut Graph,
    out: &ModelOutput,
    truth: &LossTargets,
    scales: &LossScales,
) -> Result<Losses, NetError> {
    let t = target(
        g,
        &truth.gamma_next,
        "the next-window translation",
        out.gamma_next,
    )?;
    let l_pred = mean_l1(g, out.gamma_next, t)?;
    let t = target(g, &truth.joints, "joints", out.joints)?;
    let l_joint = mean_l1(g, out.coarse_joints, t)?;
    let l_j = mean_l1(g, out.joints, t)?;
    let t = target(g, &truth.beta, "shape", out.beta)?;
    let l_beta = mean_l1(g, out.beta, t)?;
    let t = target(g, &truth.gamma, "translation", out.gamma)?;
    let l_gamma = mean_l1(g, out.gamma, t)?;

    let theta = truth
        .theta
        .as_ref()
        .ok_or_else(|| NetError::Contract("ground truth for pose is missing".into()))?;
    let rot_shape = g.shape(out.rotations).to_vec();
    if theta.len() != rot_shape[0] * 6 {
        return Err(NetError::Contract(format!(
            "ground truth for pose has {} values, expected {}",
            theta.len(),
            rot_shape[0] * 6
        )));
    }
    let mut mats = Vec::with_capacity(rot_shape[0] * 9);
    for r6 in theta.chunks_exact(6) {
        let m = rot6d_to_matrix(&r6.try_into().expect("chunk of 6"))?;
        for i in 0..3 {
            mats.extend((0..3).map(|j| m[(i, j)]));
        }
    }
    let gt_rot = g.constant_from(&rot_shape, mats)?;
    let angles = geodesic_graph(g, out.rotations, gt_rot)?;
    let l_theta = g.mean(angles);

    let l_m = match out.vertices {
        Some(v) => {
            let t = target(g, &truth.vertices, "vertices", v)?;
            mean_l1(g, v, t)?
        }
        None => {
            return Err(NetError::Contract(
                "vertex loss needs predicted vertices".into(),
            ))
        }
    };

    let s = scales;
    let weighted = |g: &mut Graph, terms: &[(Var, f64)]| -> Result<Var, NetError> {
        let mut acc = g.scale(terms[0].0, terms[0].1);
        for &(v, k) in &terms[1..] {
            let sv = g.scale(v, k);
            acc = g.add(acc, sv)?;
        }
        Ok(acc)
    };
    let l_smpl = weighted(
        g,
        &[
            (l_theta, s.theta),
            (l_beta, s.beta),
            (l_gamma, s.gamma),
            (l_j, s.joints),
            (l_m, s.vertices),
        ],
    )?;
    let total = weighted(g, &[(l_joint, s.joint), (l_smpl, 1.0), (l_pred, s.pred)])?;
    let v = |g: &Graph, x: Var| g.value(x)[0];
    let report = LossReport {
        l_pred: v(g, l_pred),
        l_joint: v(g, l_joint),
        l_theta: v(g, l_theta),
        l_beta: v(g, l_beta),
        l_gamma: v(g, l_gamma),
        l_j: v(g, l_j),
        l_m: v(g, l_m),
        l_smpl: v(g, l_smpl),
        l_total: v(g, total),
    };
    Ok(Losses { report, total })
}
