use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::topology::{joint_specs, JointRole, TopologyKind};
use super::BodyError;

/// Procedural stand-in for a licensed SMPL asset. All arrays are flat and
/// row-major; positions are meters in the body-local frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyTemplate {
    pub topology: TopologyKind,
    pub n_joints: usize,
    pub joint_names: Vec<String>,
    pub roles: Vec<JointRole>,
    /// Parent of each joint; `None` only for joint 0. Parents precede children.
    pub parents: Vec<Option<usize>>,
    /// `N_J × 3`
    pub rest_joints: Vec<f64>,
    pub n_vertices: usize,
    /// `N_V × 3`
    pub rest_vertices: Vec<f64>,
    /// Dense `N_V × N_J`, rows sum to one, at most four non-zeros per row.
    pub skin_weights: Vec<f64>,
    pub n_shape: usize,
    /// `N_β × N_J × 3`
    pub shape_dirs_joints: Vec<f64>,
    /// `N_β × N_V × 3`
    pub shape_dirs_vertices: Vec<f64>,
    /// Capsule radius of the bone each vertex was sampled on (diagnostics).
    pub vertex_radius: Vec<f64>,
}

/// Parameters that fully determine a procedural template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateSpec {
    pub n_joints: usize,
    pub n_vertices: usize,
    pub n_shape: usize,
    pub seed: u64,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        Self {
            n_joints: 24,
            n_vertices: 512,
            n_shape: 10,
            seed: 0,
        }
    }
}

impl TemplateSpec {
    pub fn build(&self) -> Result<BodyTemplate, BodyError> {
        make_template(self.n_joints, self.n_vertices, self.n_shape, self.seed)
    }
}

/// One capsule segment that vertices are sampled on.
struct Segment {
    /// Joint whose rotation drives the segment.
    owner: usize,
    /// Joint at the far end (equal to `owner` for leaf tips).
    tip_joint: usize,
    start: Vector3<f64>,
    end: Vector3<f64>,
    radius: f64,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Largest-remainder apportionment of `total` proportional to `weights`.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

fn perpendicular_basis(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if axis.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    (u, v)
}

/// Builds a deterministic procedural template.
///
/// Supported joint counts: 24 (SMPL tree), 17 (Human3.6M tree) and 2..=8
/// (vertical chain). Vertices are sampled on capsules around the bones and
/// on short tips past the leaf joints. Shape direction 0 scales every bone
/// length, direction 1 scales girth, the rest are seeded random mixtures of
/// per-bone length and girth changes.
pub fn make_template(
    n_joints: usize,
    n_vertices: usize,
    n_shape: usize,
    seed: u64,
) -> Result<BodyTemplate, BodyError> {
    let (topology, specs) = joint_specs(n_joints).ok_or_else(|| {
        BodyError::Config(format!(
            "no built-in topology with {n_joints} joints (supported: 24, 17, 2..=8)"
        ))
    })?;
    let rest: Vec<Vector3<f64>> = specs.iter().map(|s| Vector3::from(s.rest)).collect();
    let parents: Vec<Option<usize>> = specs.iter().map(|s| s.parent).collect();

    let mut segments = Vec::new();
    for (j, s) in specs.iter().enumerate() {
        if let Some(p) = s.parent {
            segments.push(Segment {
                owner: p,
                tip_joint: j,
                start: rest[p],
                end: rest[j],
                radius: s.radius,
            });
        }
        if s.tip > 0.0 {
            let dir = match s.parent {
                Some(p) => (rest[j] - rest[p]).normalize(),
                None => Vector3::z(),
            };
            segments.push(Segment {
                owner: j,
                tip_joint: j,
                start: rest[j],
                end: rest[j] + dir * s.tip,
                radius: s.radius,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let areas: Vec<f64> = segments
        .iter()
        .map(|s| (s.end - s.start).norm() * s.radius.max(0.02))
        .collect();
    let counts = if n_vertices == 0 {
        vec![0; segments.len()]
    } else {
        apportion(n_vertices, &areas)
    };

    // (segment, axial t, radial offset) per vertex
    let mut samples: Vec<(usize, f64, Vector3<f64>)> = Vec::with_capacity(n_vertices);
    for (si, (seg, &count)) in segments.iter().zip(&counts).enumerate() {
        let axis = (seg.end - seg.start).normalize();
        let (u, v) = perpendicular_basis(&axis);
        for _ in 0..count {
            let t: f64 = rng.random();
            let phi: f64 = rng.random::<f64>() * TAU;
            let offset = (u * phi.cos() + v * phi.sin()) * seg.radius;
            samples.push((si, t, offset));
        }
    }

    let mut rest_vertices = Vec::with_capacity(n_vertices * 3);
    let mut skin_weights = vec![0.0; n_vertices * n_joints];
    let mut vertex_radius = Vec::with_capacity(n_vertices);
    for (vi, &(si, t, offset)) in samples.iter().enumerate() {
        let seg = &segments[si];
        let p = seg.start + (seg.end - seg.start) * t + offset;
        rest_vertices.extend_from_slice(p.as_slice());
        vertex_radius.push(seg.radius);
        let row = &mut skin_weights[vi * n_joints..(vi + 1) * n_joints];
        if seg.tip_joint == seg.owner {
            row[seg.owner] = 1.0;
        } else {
            let w_tip = 0.5 * smoothstep((t - 0.6) / 0.4);
            row[seg.owner] = 1.0 - w_tip;
            row[seg.tip_joint] += w_tip;
        }
    }

    // Shape directions: per-bone length scale s_b and girth scale q_b.
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut shape_dirs_joints = Vec::with_capacity(n_shape * n_joints * 3);
    let mut shape_dirs_vertices = Vec::with_capacity(n_shape * n_vertices * 3);
    for k in 0..n_shape {
        let (length, girth): (Vec<f64>, Vec<f64>) = match k {
            0 => (vec![0.05; n_joints], vec![0.03; n_joints]),
            1 => (vec![0.0; n_joints], vec![0.12; n_joints]),
            _ => (0..n_joints)
                .map(|_| {
                    (
                        0.03 * normal.sample(&mut rng),
                        0.05 * normal.sample(&mut rng),
                    )
                })
                .unzip(),
        };
        let mut disp = vec![Vector3::zeros(); n_joints];
        for j in 0..n_joints {
            if let Some(p) = parents[j] {
                disp[j] = disp[p] + (rest[j] - rest[p]) * length[j];
            }
        }
        for d in &disp {
            shape_dirs_joints.extend_from_slice(d.as_slice());
        }
        for &(si, t, offset) in &samples {
            let seg = &segments[si];
            let d = if seg.tip_joint == seg.owner {
                disp[seg.owner]
                    + (seg.end - seg.start) * (t * length[seg.owner])
                    + offset * girth[seg.owner]
            } else {
                let (a, b) = (disp[seg.owner], disp[seg.tip_joint]);
                a + (b - a) * t + offset * girth[seg.tip_joint]
            };
            shape_dirs_vertices.extend_from_slice(d.as_slice());
        }
    }

    let template = BodyTemplate {
        topology,
        n_joints,
        joint_names: specs.iter().map(|s| s.name.to_string()).collect(),
        roles: specs.iter().map(|s| s.role).collect(),
        parents,
        rest_joints: rest.iter().flat_map(|r| [r.x, r.y, r.z]).collect(),
        n_vertices,
        rest_vertices,
        skin_weights,
        n_shape,
        shape_dirs_joints,
        shape_dirs_vertices,
        vertex_radius,
    };
    template.validate()?;
    Ok(template)
}

impl BodyTemplate {
    pub fn validate(&self) -> Result<(), BodyError> {
        let (nj, nv, ns) = (self.n_joints, self.n_vertices, self.n_shape);
        let check = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(BodyError::Dimension {
                    what: what.to_string(),
                    expected: want,
                    got,
                })
            }
        };
        if nj < 2 {
            return Err(BodyError::Config(format!(
                "need at least 2 joints, got {nj}"
            )));
        }
        check("parents", self.parents.len(), nj)?;
        check("joint_names", self.joint_names.len(), nj)?;
        check("roles", self.roles.len(), nj)?;
        check("rest_joints", self.rest_joints.len(), nj * 3)?;
        check("rest_vertices", self.rest_vertices.len(), nv * 3)?;
        check("skin_weights", self.skin_weights.len(), nv * nj)?;
        check(
            "shape_dirs_joints",
            self.shape_dirs_joints.len(),
            ns * nj * 3,
        )?;
        check(
            "shape_dirs_vertices",
            self.shape_dirs_vertices.len(),
            ns * nv * 3,
        )?;
        check("vertex_radius", self.vertex_radius.len(), nv)?;
        if self.parents[0].is_some() {
            return Err(BodyError::Config("joint 0 must be the root".into()));
        }
        for (j, p) in self.parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                _ => {
                    return Err(BodyError::Config(format!(
                        "joint {j} must have a parent with a lower index"
                    )))
                }
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.rest_joints)
            || !finite(&self.rest_vertices)
            || !finite(&self.shape_dirs_joints)
            || !finite(&self.shape_dirs_vertices)
        {
            return Err(BodyError::Config(
                "template contains non-finite values".into(),
            ));
        }
        for v in 0..nv {
            let row = &self.skin_weights[v * nj..(v + 1) * nj];
            let sum: f64 = row.iter().sum();
            let nonzero = row.iter().filter(|&&w| w != 0.0).count();
            if (sum - 1.0).abs() > 1e-9 || nonzero > 4 || row.iter().any(|&w| w < 0.0) {
                return Err(BodyError::Config(format!(
                    "skin weights of vertex {v} are invalid"
                )));
            }
        }
        Ok(())
    }

    pub fn rest_joint(&self, j: usize) -> Vector3<f64> {
        Vector3::new(
            self.rest_joints[3 * j],
            self.rest_joints[3 * j + 1],
            self.rest_joints[3 * j + 2],
        )
    }

    pub fn save_json(&self, path: &Path) -> Result<(), BodyError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, BodyError> {
        let t: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        t.validate()?;
        Ok(t)
    }
}
