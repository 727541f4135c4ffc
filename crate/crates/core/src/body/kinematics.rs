use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{rot6d_to_matrix, IDENTITY_6D};
use super::{BodyError, BodyTemplate};

/// Pose, shape and translation for a sequence of frames, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub n_frames: usize,
    pub n_joints: usize,
    pub n_shape: usize,
    /// `T × 6·N_J`, per-joint rotation relative to the parent.
    pub theta: Vec<f64>,
    /// `T × N_β`
    pub beta: Vec<f64>,
    /// `T × 3`, meters.
    pub gamma: Vec<f64>,
}

impl BodyParams {
    /// Identity pose, zero shape, zero translation.
    pub fn identity(n_frames: usize, n_joints: usize, n_shape: usize) -> Self {
        Self {
            n_frames,
            n_joints,
            n_shape,
            theta: IDENTITY_6D.repeat(n_frames * n_joints),
            beta: vec![0.0; n_frames * n_shape],
            gamma: vec![0.0; n_frames * 3],
        }
    }

    pub fn validate(&self) -> Result<(), BodyError> {
        let check = |what: &str, got: usize, expected: usize| {
            if got == expected {
                Ok(())
            } else {
                Err(BodyError::Dimension {
                    what: what.into(),
                    expected,
                    got,
                })
            }
        };
        check("theta", self.theta.len(), self.n_frames * self.n_joints * 6)?;
        check("beta", self.beta.len(), self.n_frames * self.n_shape)?;
        check("gamma", self.gamma.len(), self.n_frames * 3)?;
        if self
            .theta
            .iter()
            .chain(&self.beta)
            .chain(&self.gamma)
            .any(|v| !v.is_finite())
        {
            return Err(BodyError::Contract("body parameters must be finite".into()));
        }
        Ok(())
    }

    fn check_against(&self, template: &BodyTemplate) -> Result<(), BodyError> {
        self.validate()?;
        if self.n_joints != template.n_joints {
            return Err(BodyError::Dimension {
                what: "joints".into(),
                expected: template.n_joints,
                got: self.n_joints,
            });
        }
        if self.n_shape != template.n_shape {
            return Err(BodyError::Dimension {
                what: "shape".into(),
                expected: template.n_shape,
                got: self.n_shape,
            });
        }
        Ok(())
    }

    pub fn theta_frame(&self, t: usize) -> &[f64] {
        let w = 6 * self.n_joints;
        &self.theta[t * w..(t + 1) * w]
    }

    pub fn beta_frame(&self, t: usize) -> &[f64] {
        &self.beta[t * self.n_shape..(t + 1) * self.n_shape]
    }

    pub fn gamma_frame(&self, t: usize) -> Vector3<f64> {
        Vector3::new(
            self.gamma[3 * t],
            self.gamma[3 * t + 1],
            self.gamma[3 * t + 2],
        )
    }

    /// Copies frames `start..start + len` into a new parameter set.
    pub fn slice_frames(&self, start: usize, len: usize) -> Self {
        let (w, s) = (6 * self.n_joints, self.n_shape);
        Self {
            n_frames: len,
            n_joints: self.n_joints,
            n_shape: s,
            theta: self.theta[start * w..(start + len) * w].to_vec(),
            beta: self.beta[start * s..(start + len) * s].to_vec(),
            gamma: self.gamma[start * 3..(start + len) * 3].to_vec(),
        }
    }

    /// Concatenates parameter sets frame-wise. All parts must share `N_J`, `N_β`.
    pub fn concat(parts: &[BodyParams]) -> Result<Self, BodyError> {
        let first = parts
            .first()
            .ok_or_else(|| BodyError::Contract("nothing to concatenate".into()))?;
        let mut out = Self {
            n_frames: 0,
            theta: vec![],
            beta: vec![],
            gamma: vec![],
            ..first.clone()
        };
        for p in parts {
            if p.n_joints != out.n_joints || p.n_shape != out.n_shape {
                return Err(BodyError::Contract(
                    "parameter sets disagree on joint or shape count".into(),
                ));
            }
            out.n_frames += p.n_frames;
            out.theta.extend_from_slice(&p.theta);
            out.beta.extend_from_slice(&p.beta);
            out.gamma.extend_from_slice(&p.gamma);
        }
        Ok(out)
    }

    /// Local rotation matrices of frame `t`.
    pub fn rotations(&self, t: usize) -> Result<Vec<Matrix3<f64>>, BodyError> {
        self.theta_frame(t)
            .chunks_exact(6)
            .map(|c| rot6d_to_matrix(c.try_into().expect("chunk of 6")))
            .collect()
    }
}

/// World transform of every joint for one frame. `positions` already
/// include the translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub rotations: Vec<Matrix3<f64>>,
    pub positions: Vec<Vector3<f64>>,
    /// Shape-adjusted rest joints the transforms were built from.
    pub rest_joints: Vec<Vector3<f64>>,
}

#[derive(Clone, Debug)]
pub struct Kinematics {
    /// `T × N_J × 3`
    pub joints: Vec<f64>,
    pub poses: Vec<Pose>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyOutput {
    /// `T × N_J × 3`
    pub joints: Vec<f64>,
    /// `T × N_V × 3`
    pub vertices: Vec<f64>,
}

impl BodyTemplate {
    pub fn shaped_joints(&self, beta: &[f64]) -> Vec<Vector3<f64>> {
        blend(
            &self.rest_joints,
            &self.shape_dirs_joints,
            self.n_joints,
            beta,
        )
    }

    pub fn shaped_vertices(&self, beta: &[f64]) -> Vec<Vector3<f64>> {
        blend(
            &self.rest_vertices,
            &self.shape_dirs_vertices,
            self.n_vertices,
            beta,
        )
    }

    /// World transforms for a single frame.
    pub fn pose_frame(
        &self,
        theta: &[f64],
        beta: &[f64],
        gamma: Vector3<f64>,
    ) -> Result<Pose, BodyError> {
        if theta.len() != 6 * self.n_joints {
            return Err(BodyError::Dimension {
                what: "theta".into(),
                expected: 6 * self.n_joints,
                got: theta.len(),
            });
        }
        if beta.len() != self.n_shape {
            return Err(BodyError::Dimension {
                what: "beta".into(),
                expected: self.n_shape,
                got: beta.len(),
            });
        }
        let rest = self.shaped_joints(beta);
        let mut rotations: Vec<Matrix3<f64>> = Vec::with_capacity(self.n_joints);
        let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(self.n_joints);
        for (j, r6) in theta.chunks_exact(6).enumerate() {
            let local = rot6d_to_matrix(r6.try_into().expect("chunk of 6"))?;
            match self.parents[j] {
                None => {
                    rotations.push(local);
                    positions.push(rest[j] + gamma);
                }
                Some(p) => {
                    let (rp, tp) = (rotations[p], positions[p]);
                    rotations.push(rp * local);
                    positions.push(tp + rp * (rest[j] - rest[p]));
                }
            }
        }
        Ok(Pose {
            rotations,
            positions,
            rest_joints: rest,
        })
    }

    /// Linear blend skinning of one frame.
    pub fn skin_frame(&self, pose: &Pose, beta: &[f64]) -> Vec<Vector3<f64>> {
        let nj = self.n_joints;
        self.shaped_vertices(beta)
            .iter()
            .enumerate()
            .map(|(v, x)| {
                let row = &self.skin_weights[v * nj..(v + 1) * nj];
                row.iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(j, &w)| {
                        (pose.rotations[j] * (x - pose.rest_joints[j]) + pose.positions[j]) * w
                    })
                    .sum()
            })
            .collect()
    }
}

fn blend(rest: &[f64], dirs: &[f64], n: usize, beta: &[f64]) -> Vec<Vector3<f64>> {
    let mut out: Vec<f64> = rest.to_vec();
    for (k, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            let dir = &dirs[k * n * 3..(k + 1) * n * 3];
            out.iter_mut().zip(dir).for_each(|(o, d)| *o += b * d);
        }
    }
    out.chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect()
}

/// Joint positions for every frame, plus the per-frame world transforms
/// needed for skinning.
pub fn forward_kinematics(
    template: &BodyTemplate,
    params: &BodyParams,
) -> Result<Kinematics, BodyError> {
    params.check_against(template)?;
    let mut joints = Vec::with_capacity(params.n_frames * template.n_joints * 3);
    let mut poses = Vec::with_capacity(params.n_frames);
    for t in 0..params.n_frames {
        let pose = template.pose_frame(
            params.theta_frame(t),
            params.beta_frame(t),
            params.gamma_frame(t),
        )?;
        joints.extend(pose.positions.iter().flat_map(|p| [p.x, p.y, p.z]));
        poses.push(pose);
    }
    Ok(Kinematics { joints, poses })
}

pub fn skin_vertices(
    template: &BodyTemplate,
    poses: &[Pose],
    params: &BodyParams,
) -> Result<Vec<f64>, BodyError> {
    params.check_against(template)?;
    if poses.len() != params.n_frames {
        return Err(BodyError::Dimension {
            what: "poses".into(),
            expected: params.n_frames,
            got: poses.len(),
        });
    }
    let mut out = Vec::with_capacity(params.n_frames * template.n_vertices * 3);
    for (t, pose) in poses.iter().enumerate() {
        if pose.rotations.len() != template.n_joints {
            return Err(BodyError::Dimension {
                what: "pose joints".into(),
                expected: template.n_joints,
                got: pose.rotations.len(),
            });
        }
        out.extend(
            template
                .skin_frame(pose, params.beta_frame(t))
                .iter()
                .flat_map(|p| [p.x, p.y, p.z]),
        );
    }
    Ok(out)
}

pub fn body_forward(template: &BodyTemplate, params: &BodyParams) -> Result<BodyOutput, BodyError> {
    let kin = forward_kinematics(template, params)?;
    let vertices = skin_vertices(template, &kin.poses, params)?;
    Ok(BodyOutput {
        joints: kin.joints,
        vertices,
    })
}
