//! Point backbone: stacked set-abstraction stages and a global stage, each
//! aggregating its group with softmax-normalized learned scores.

use super::config::{NetConfig, SaStage};
use super::nn::{Ctx, Init, Linear, Mlp};
use super::sampling::{ball_query, farthest_point_sample, nearest_to_centroid};
use super::NetError;
use crate::autodiff::{ParamStore, Var};

/// Points and features after a stage; `positions` holds `frames × k` rows.
pub struct StageOutput {
    pub k: usize,
    pub positions: Vec<[f64; 3]>,
    /// `[frames·k, d_out]`
    pub features: Var,
}

/// Score-weighted sum over groups of `m` consecutive rows of `x: [G·m, w]`.
fn attend_groups(
    ctx: &mut Ctx,
    score: &Linear,
    x: Var,
    groups: usize,
    m: usize,
) -> Result<Var, NetError> {
    let w = *ctx.g.shape(x).last().expect("rank >= 1");
    let s = score.forward(ctx, x)?;
    let s = ctx.g.reshape(s, &[groups, m])?;
    let a = ctx.g.softmax(s, 1)?;
    let a = ctx.g.reshape(a, &[groups, 1, m])?;
    let x = ctx.g.reshape(x, &[groups, m, w])?;
    let y = ctx.g.bmm(a, x)?;
    Ok(ctx.g.reshape(y, &[groups, w])?)
}

pub struct SetAbstraction {
    pub stage: SaStage,
    pub mlp: Mlp,
    pub score: Linear,
}

impl SetAbstraction {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        din: usize,
        stage: &SaStage,
    ) -> Self {
        let mlp = Mlp::new(
            store,
            init,
            &format!("{name}.mlp"),
            din + 3,
            &stage.mlp,
            true,
        );
        let score = Linear::new(
            store,
            init,
            &format!("{name}.score"),
            mlp.out_dim(),
            1,
            false,
        );
        Self {
            stage: stage.clone(),
            mlp,
            score,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    /// `positions`: `frames × n_in` points; `features`: `[frames·n_in, d_in]`.
    pub fn forward(
        &self,
        ctx: &mut Ctx,
        frames: usize,
        n_in: usize,
        k: usize,
        positions: &[[f64; 3]],
        features: Var,
    ) -> Result<StageOutput, NetError> {
        let m = self.stage.group_size;
        let mut new_positions = Vec::with_capacity(frames * k);
        let mut members = Vec::with_capacity(frames * k * m);
        let mut rel = Vec::with_capacity(frames * k * m * 3);
        for f in 0..frames {
            let pts = &positions[f * n_in..(f + 1) * n_in];
            let picked = farthest_point_sample(pts, k, nearest_to_centroid(pts))?;
            let centers: Vec<[f64; 3]> = picked.iter().map(|&i| pts[i]).collect();
            let groups = ball_query(pts, &centers, self.stage.radius, m)?;
            for (c, group) in centers.iter().zip(&groups) {
                for &i in group {
                    members.push(f * n_in + i);
                    rel.extend((0..3).map(|d| pts[i][d] - c[d]));
                }
            }
            new_positions.extend(centers);
        }
        let rows = frames * k * m;
        let gathered = ctx.g.gather_rows(features, &members)?;
        let rel = ctx.g.constant_from(&[rows, 3], rel)?;
        let x = ctx.g.concat_last_axis(&[rel, gathered])?;
        let x = self.mlp.forward(ctx, x)?;
        let features = attend_groups(ctx, &self.score, x, frames * k, m)?;
        Ok(StageOutput {
            k,
            positions: new_positions,
            features,
        })
    }
}

/// Final stage: every remaining point of a frame forms one group.
pub struct GlobalAggregation {
    pub mlp: Mlp,
    pub score: Linear,
}

impl GlobalAggregation {
    pub fn forward(
        &self,
        ctx: &mut Ctx,
        frames: usize,
        n: usize,
        positions: &[[f64; 3]],
        features: Var,
    ) -> Result<Var, NetError> {
        let pos = ctx.g.constant_from(
            &[frames * n, 3],
            positions.iter().flatten().copied().collect(),
        )?;
        let x = ctx.g.concat_last_axis(&[pos, features])?;
        let x = self.mlp.forward(ctx, x)?;
        attend_groups(ctx, &self.score, x, frames, n)
    }
}

pub struct Backbone {
    pub stages: Vec<SetAbstraction>,
    pub global: GlobalAggregation,
    sizes: Vec<usize>,
    points: usize,
    channels: usize,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, init: &mut Init, config: &NetConfig) -> Self {
        let mut din = config.channels - 3;
        let mut stages = Vec::new();
        for (i, s) in config.sa_stages.iter().enumerate() {
            let sa = SetAbstraction::new(store, init, &format!("backbone.sa{}", i + 1), din, s);
            din = sa.out_dim();
            stages.push(sa);
        }
        let mlp = Mlp::new(
            store,
            init,
            "backbone.global.mlp",
            din + 3,
            &[config.feature_dim],
            true,
        );
        let score = Linear::new(
            store,
            init,
            "backbone.global.score",
            config.feature_dim,
            1,
            false,
        );
        Self {
            stages,
            global: GlobalAggregation { mlp, score },
            sizes: config.stage_sizes(),
            points: config.points,
            channels: config.channels,
        }
    }

    /// Spatial features `[frames, D_f]` for `frames × N × C` points given in
    /// crop-relative coordinates. Each frame's points are put in canonical
    /// (lexicographic) order first, so the result does not depend on the
    /// order the points arrive in.
    pub fn forward(
        &self,
        ctx: &mut Ctx,
        frames: usize,
        relative_points: &[f64],
    ) -> Result<Var, NetError> {
        let (n, c) = (self.points, self.channels);
        if relative_points.len() != frames * n * c {
            return Err(NetError::Contract(format!(
                "backbone expects {frames}×{n}×{c} values, got {}",
                relative_points.len()
            )));
        }
        let mut positions = Vec::with_capacity(frames * n);
        let mut extra = Vec::with_capacity(frames * n * (c - 3));
        for f in 0..frames {
            let mut rows: Vec<&[f64]> = relative_points[f * n * c..(f + 1) * n * c]
                .chunks_exact(c)
                .collect();
            rows.sort_by(|a, b| {
                a.iter()
                    .zip(*b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            for r in rows {
                positions.push([r[0], r[1], r[2]]);
                extra.extend_from_slice(&r[3..]);
            }
        }
        let mut features = ctx.g.constant_from(&[frames * n, c - 3], extra)?;
        let mut n_in = n;
        for (sa, &k) in self.stages.iter().zip(&self.sizes) {
            let out = sa.forward(ctx, frames, n_in, k, &positions, features)?;
            positions = out.positions;
            features = out.features;
            n_in = out.k;
        }
        self.global.forward(ctx, frames, n_in, &positions, features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_params;
    use crate::autodiff::{Graph, ParamStore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stage() -> SaStage {
        SaStage {
            sample_divisor: 2,
            radius: 0.4,
            group_size: 3,
            mlp: vec![5, 4],
        }
    }

    #[test]
    fn constant_group_returns_the_point_feature() {
        let mut store = ParamStore::new();
        let sa = SetAbstraction::new(&mut store, &mut Init::new(1), "sa", 2, &stage());
        let pts = vec![[0.1, 0.2, 0.3]; 6];
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, &store);
        let feats = ctx.g.constant_from(&[6, 2], [0.7, -0.2].repeat(6)).unwrap();
        let out = sa.forward(&mut ctx, 1, 6, 3, &pts, feats).unwrap();
        // per-point MLP output of the single distinct point (relative position 0)
        let x = ctx
            .g
            .constant_from(&[1, 5], vec![0.0, 0.0, 0.0, 0.7, -0.2])
            .unwrap();
        let y = sa.mlp.forward(&mut ctx, x).unwrap();
        let expect = ctx.g.value(y).to_vec();
        for row in ctx.g.value(out.features).chunks(4) {
            for (a, b) in row.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_scores_average_uniformly() {
        let mut store = ParamStore::new();
        let sa = SetAbstraction::new(&mut store, &mut Init::new(2), "sa", 1, &stage());
        store.get_mut(sa.score.weight).values_mut().fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<[f64; 3]> = (0..8)
            .map(|_| {
                [
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    0.0,
                ]
            })
            .collect();
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, &store);
        let feats = ctx
            .g
            .constant_from(&[8, 1], (0..8).map(|i| i as f64).collect())
            .unwrap();
        let out = sa.forward(&mut ctx, 1, 8, 2, &pts, feats).unwrap();
        // recompute the per-point MLP rows and average each group by hand
        let picked = farthest_point_sample(&pts, 2, nearest_to_centroid(&pts)).unwrap();
        let centers: Vec<[f64; 3]> = picked.iter().map(|&i| pts[i]).collect();
        let groups = ball_query(&pts, &centers, 0.4, 3).unwrap();
        for (gi, group) in groups.iter().enumerate() {
            let mut mean = [0.0; 4];
            for &i in group {
                let row: Vec<f64> = (0..3)
                    .map(|d| pts[i][d] - centers[gi][d])
                    .chain([i as f64])
                    .collect();
                let x = ctx.g.constant_from(&[1, 4], row).unwrap();
                let y = sa.mlp.forward(&mut ctx, x).unwrap();
                for (m, v) in mean.iter_mut().zip(ctx.g.value(y)) {
                    *m += v / 3.0;
                }
            }
            let got = &ctx.g.value(out.features)[gi * 4..gi * 4 + 4];
            for (a, b) in got.iter().zip(mean) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stage_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let sa = SetAbstraction::new(&mut store, &mut Init::new(3), "sa", 2, &stage());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 3]> = (0..16)
            .map(|_| std::array::from_fn(|_| rng.random_range(-0.3..0.3)))
            .collect();
        let feats: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let proj: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ids: Vec<_> = store.ids().collect();
        let check = check_params(&store, &ids, 1e-5, None, |g, s| {
            let mut ctx = Ctx::new(g, s);
            let f = ctx.g.constant_from(&[16, 2], feats.clone())?;
            let out = sa
                .forward(&mut ctx, 2, 8, 2, &pts, f)
                .map_err(NetError::into_autodiff)?;
            let p = ctx.g.constant_from(&[4, 4], proj.clone())?;
            let y = ctx.g.mul(out.features, p)?;
            Ok(ctx.g.sum(y))
        })
        .unwrap();
        assert!(check.max_rel_err() < 1e-4, "{:?}", check.worst());
    }

    fn backbone_input(rng: &mut ChaCha8Rng, frames: usize, n: usize) -> Vec<f64> {
        (0..frames * n)
            .flat_map(|_| {
                [
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.0..0.2),
                ]
            })
            .collect()
    }

    #[test]
    fn point_order_does_not_matter() {
        let config = NetConfig {
            points: 64,
            feature_dim: 16,
            ..NetConfig::micro()
        };
        let mut store = ParamStore::new();
        let bb = Backbone::new(&mut store, &mut Init::new(7), &config);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = backbone_input(&mut rng, 2, 64);
        let mut rows: Vec<Vec<f64>> = pts.chunks(5).map(|r| r.to_vec()).collect();
        rows[..64].reverse();
        rows[64..].rotate_left(17);
        let shuffled: Vec<f64> = rows.concat();
        let run = |p: &[f64]| {
            let mut g = Graph::new();
            let mut ctx = Ctx::new(&mut g, &store);
            let f = bb.forward(&mut ctx, 2, p).unwrap();
            assert_eq!(ctx.g.shape(f), &[2, 16]);
            ctx.g.value(f).to_vec()
        };
        let (a, b) = (run(&pts), run(&shuffled));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_points_give_finite_features() {
        let config = NetConfig {
            points: 32,
            ..NetConfig::micro()
        };
        let mut store = ParamStore::new();
        let bb = Backbone::new(&mut store, &mut Init::new(7), &config);
        let pts = [0.1, -0.2, 0.3, 0.5, 0.1].repeat(32 * 3);
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, &store);
        let f = bb.forward(&mut ctx, 3, &pts).unwrap();
        assert_eq!(ctx.g.shape(f), &[3, config.feature_dim]);
        assert!(ctx.g.value(f).iter().all(|v| v.is_finite()));
    }
}
