//! The body model recorded on an autodiff graph, so losses on joints,
//! vertices and rotations reach θ, β and γ.

use crate::autodiff::{Graph, Var};

use super::rotation::{DEGENERATE_NORM, GEODESIC_CLAMP};
use super::{BodyError, BodyTemplate};

/// Gram–Schmidt on a `[B, 6]` batch, returning `[B, 3, 3]` rotation matrices.
pub fn rot6d_graph(g: &mut Graph, r6: Var) -> Result<Var, BodyError> {
    let shape = g.shape(r6).to_vec();
    if shape.len() != 2 || shape[1] != 6 {
        return Err(BodyError::Contract(format!(
            "rot6d_graph expects [B, 6], got {shape:?}"
        )));
    }
    let b = shape[0];
    let a1 = g.slice_last_axis(r6, 0, 3)?;
    let a2 = g.slice_last_axis(r6, 3, 3)?;
    let b1 = normalize_rows(g, a1)?;
    let proj = g.mul(b1, a2)?;
    let dot = g.sum_axis(proj, 1, true)?;
    let along = g.mul(b1, dot)?;
    let u2 = g.sub(a2, along)?;
    let b2 = normalize_rows(g, u2)?;
    let b3 = g.cross(b1, b2)?;
    // columns laid out one after another, then transposed into row-major R
    let cols = g.concat_last_axis(&[b1, b2, b3])?;
    let cols = g.reshape(cols, &[b, 3, 3])?;
    Ok(g.permute(cols, &[0, 2, 1])?)
}

fn normalize_rows(g: &mut Graph, x: Var) -> Result<Var, BodyError> {
    let sq = g.mul(x, x)?;
    let n2 = g.sum_axis(sq, 1, true)?;
    if let Some(&min) = g.value(n2).iter().min_by(|a, b| a.total_cmp(b)) {
        if min.sqrt() < DEGENERATE_NORM {
            return Err(BodyError::DegenerateRotation { norm: min.sqrt() });
        }
    }
    let n = g.sqrt(n2);
    Ok(g.div(x, n)?)
}

/// Geodesic angle between two `[B, 3, 3]` batches, shape `[B]`.
pub fn geodesic_graph(g: &mut Graph, r1: Var, r2: Var) -> Result<Var, BodyError> {
    let shape = g.shape(r1).to_vec();
    if shape.len() != 3 || shape[1..] != [3, 3] || g.shape(r2) != shape.as_slice() {
        return Err(BodyError::Contract(format!(
            "geodesic_graph expects matching [B, 3, 3] inputs, got {shape:?} and {:?}",
            g.shape(r2)
        )));
    }
    let prod = g.mul(r1, r2)?;
    let flat = g.reshape(prod, &[shape[0], 9])?;
    let trace = g.sum_axis(flat, 1, false)?;
    let cos = g.affine(trace, 0.5, -0.5);
    let cos = g.clamp(cos, -1.0 + GEODESIC_CLAMP, 1.0 - GEODESIC_CLAMP);
    Ok(g.acos(cos))
}

/// Template data as graph constants, recorded once per graph.
pub struct BodyGraph<'a> {
    template: &'a BodyTemplate,
}

pub struct GraphBodyOutput {
    /// `[F, N_J, 3]`
    pub joints: Var,
    /// `[F, N_V, 3]`, when requested.
    pub vertices: Option<Var>,
    /// Local rotations `[F·N_J, 3, 3]`.
    pub rotations: Var,
}

impl<'a> BodyGraph<'a> {
    pub fn new(template: &'a BodyTemplate) -> Self {
        Self { template }
    }

    /// `theta: [F, 6·N_J]`, `beta: [F, N_β]`, `gamma: [F, 3]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        theta: Var,
        beta: Var,
        gamma: Var,
        with_vertices: bool,
    ) -> Result<GraphBodyOutput, BodyError> {
        let t = self.template;
        let (nj, nv, ns) = (t.n_joints, t.n_vertices, t.n_shape);
        let f = g.shape(theta)[0];
        let expect = |g: &Graph, v: Var, want: &[usize], what: &str| {
            if g.shape(v) == want {
                Ok(())
            } else {
                Err(BodyError::Contract(format!(
                    "{what}: expected shape {want:?}, got {:?}",
                    g.shape(v)
                )))
            }
        };
        expect(g, theta, &[f, 6 * nj], "theta")?;
        expect(g, gamma, &[f, 3], "gamma")?;
        if ns > 0 {
            expect(g, beta, &[f, ns], "beta")?;
        }

        let shaped_joints = self.shaped(g, &t.rest_joints, &t.shape_dirs_joints, nj, beta)?;
        let r6 = g.reshape(theta, &[f * nj, 6])?;
        let local = rot6d_graph(g, r6)?;
        let local_flat = g.reshape(local, &[f, nj * 9])?;

        let mut world_r: Vec<Var> = Vec::with_capacity(nj);
        let mut world_t: Vec<Var> = Vec::with_capacity(nj);
        let mut rest_j: Vec<Var> = Vec::with_capacity(nj);
        for j in 0..nj {
            let rj = g.slice_last_axis(local_flat, 9 * j, 9)?;
            let rj = g.reshape(rj, &[f, 3, 3])?;
            let jj = g.slice_last_axis(shaped_joints, 3 * j, 3)?;
            rest_j.push(jj);
            match t.parents[j] {
                None => {
                    world_r.push(rj);
                    world_t.push(g.add(jj, gamma)?);
                }
                Some(p) => {
                    let offset = g.sub(jj, rest_j[p])?;
                    let offset = g.reshape(offset, &[f, 3, 1])?;
                    let moved = g.bmm(world_r[p], offset)?;
                    let moved = g.reshape(moved, &[f, 3])?;
                    world_t.push(g.add(world_t[p], moved)?);
                    let r = g.bmm(world_r[p], rj)?;
                    world_r.push(r);
                }
            }
        }
        let joints = g.concat_last_axis(&world_t)?;
        let joints = g.reshape(joints, &[f, nj, 3])?;

        let vertices = if with_vertices && nv > 0 {
            // per-joint affine [R | t − R·J] as 12-vectors, blended by the skin weights
            let mut affine = Vec::with_capacity(nj);
            for j in 0..nj {
                let jj = g.reshape(rest_j[j], &[f, 3, 1])?;
                let rotated = g.bmm(world_r[j], jj)?;
                let rotated = g.reshape(rotated, &[f, 3])?;
                let shift = g.sub(world_t[j], rotated)?;
                let r = g.reshape(world_r[j], &[f, 9])?;
                affine.push(g.concat_last_axis(&[r, shift])?);
            }
            let a = g.concat_last_axis(&affine)?;
            let a = g.reshape(a, &[f, nj, 12])?;
            let a = g.permute(a, &[1, 0, 2])?;
            let a = g.reshape(a, &[nj, f * 12])?;
            let w = g.constant_from(&[nv, nj], t.skin_weights.clone())?;
            let blended = g.matmul(w, a)?;
            let blended = g.reshape(blended, &[nv, f, 12])?;
            let blended = g.permute(blended, &[1, 0, 2])?;
            let blended = g.reshape(blended, &[f * nv, 12])?;
            let rot = g.slice_last_axis(blended, 0, 9)?;
            let rot = g.reshape(rot, &[f * nv, 3, 3])?;
            let shift = g.slice_last_axis(blended, 9, 3)?;

            let shaped = self.shaped(g, &t.rest_vertices, &t.shape_dirs_vertices, nv, beta)?;
            let x = g.reshape(shaped, &[f * nv, 3, 1])?;
            let moved = g.bmm(rot, x)?;
            let moved = g.reshape(moved, &[f * nv, 3])?;
            let v = g.add(moved, shift)?;
            Some(g.reshape(v, &[f, nv, 3])?)
        } else {
            None
        };

        Ok(GraphBodyOutput {
            joints,
            vertices,
            rotations: local,
        })
    }

    /// Rest positions plus the shape blend, `[F, n·3]`.
    fn shaped(
        &self,
        g: &mut Graph,
        rest: &[f64],
        dirs: &[f64],
        n: usize,
        beta: Var,
    ) -> Result<Var, BodyError> {
        let rest = g.constant_from(&[1, n * 3], rest.to_vec())?;
        let ns = self.template.n_shape;
        if ns == 0 {
            let f = g.shape(beta)[0];
            let zero = g.constant_from(&[f, 1], vec![0.0; f])?;
            return Ok(g.add(rest, zero)?);
        }
        let dirs = g.constant_from(&[ns, n * 3], dirs.to_vec())?;
        let offset = g.matmul(beta, dirs)?;
        Ok(g.add(offset, rest)?)
    }
}
