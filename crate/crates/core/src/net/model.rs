use super::backbone::Backbone;
use super::config::NetConfig;
use super::crop::ProcessedSequence;
use super::gru::BiGru;
use super::heads::{MultiHeadAttention, ParamRegressor};
use super::nn::{Ctx, Init, Linear, Mlp};
use super::NetError;
use crate::autodiff::{ParamId, ParamStore, Var};
use crate::body::{BodyGraph, BodyTemplate};

/// Dropout layer id of the global feature.
const GLOBAL_DROPOUT: u64 = 1;

pub struct MmBat {
    pub config: NetConfig,
    pub template: BodyTemplate,
    pub backbone: Backbone,
    pub gru: BiGru,
    pub translation_head: Mlp,
    pub skeleton_head: Mlp,
    pub fusion: Linear,
    /// Learned per-joint offset added to the fused tokens, `[N_J, D]`.
    pub joint_embedding: ParamId,
    pub attention: MultiHeadAttention,
    pub regressor: ParamRegressor,
}

/// Network outputs for `B` windows of `T` frames; frame rows are `b·T + t`
/// and every position is in radar coordinates.
pub struct ModelOutput {
    pub batch: usize,
    pub window: usize,
    /// Predicted root translations for the following window, `[B·T, 3]`.
    pub gamma_next: Var,
    /// Coarse skeleton, `[B·T, N_J, 3]`.
    pub coarse_joints: Var,
    /// `[B·T, 6·N_J]`
    pub theta: Var,
    /// `[B·T, N_β]`
    pub beta: Var,
    /// `[B·T, 3]`
    pub gamma: Var,
    /// Joints of the regressed body, `[B·T, N_J, 3]`.
    pub joints: Var,
    /// `[B·T, N_V, 3]` when vertices were requested.
    pub vertices: Option<Var>,
    /// Local joint rotations, `[B·T·N_J, 3, 3]`.
    pub rotations: Var,
    /// `[B·T·heads, N_J, N_J]`
    pub attention: Var,
}

impl MmBat {
    /// Registers every weight in `store`, initialized from `config.init_seed`.
    pub fn new(config: &NetConfig, store: &mut ParamStore) -> Result<Self, NetError> {
        config.validate()?;
        let template = config.template.build()?;
        if template.n_shape == 0 {
            return Err(NetError::Config(
                "the network needs at least one shape coefficient".into(),
            ));
        }
        let mut init = Init::new(config.init_seed);
        let init = &mut init;
        let backbone = Backbone::new(store, init, config);
        let gru = BiGru::new(
            store,
            init,
            "gru",
            config.feature_dim,
            config.global_dim / 2,
        );
        let g = gru.out_dim();
        let hidden = |h: &[usize], out: usize| h.iter().copied().chain([out]).collect::<Vec<_>>();
        let translation_head = Mlp::new(
            store,
            init,
            "translation_head",
            g,
            &hidden(&config.translation_hidden, 3),
            false,
        );
        let nj = template.n_joints;
        let skeleton_head = Mlp::new(
            store,
            init,
            "skeleton_head",
            g,
            &hidden(&config.skeleton_hidden, nj * 3),
            false,
        );
        let fusion = Linear::new(store, init, "fusion", 3 + g, g, true);
        let joint_embedding = store.register("fusion.joint_embedding", init.uniform(&[nj, g], 1));
        let attention = MultiHeadAttention::new(store, init, "attention", g, config.heads)?;
        let regressor = ParamRegressor::new(
            store,
            init,
            g,
            &config.pose_hidden,
            &config.param_hidden,
            template.n_shape,
        );
        Ok(Self {
            config: config.clone(),
            template,
            backbone,
            gru,
            translation_head,
            skeleton_head,
            fusion,
            joint_embedding,
            attention,
            regressor,
        })
    }

    /// Weights of the translation predictor.
    pub fn translation_params(&self) -> Vec<ParamId> {
        self.translation_head
            .layers
            .iter()
            .flat_map(|l| [Some(l.weight), l.bias])
            .flatten()
            .collect()
    }

    pub fn forward(
        &self,
        ctx: &mut Ctx,
        windows: &[&ProcessedSequence],
        with_vertices: bool,
    ) -> Result<ModelOutput, NetError> {
        let c = &self.config;
        let (t_len, n, ch) = (c.window, c.points, c.channels);
        let batch = windows.len();
        if batch == 0 {
            return Err(NetError::Contract(
                "forward needs at least one window".into(),
            ));
        }
        for w in windows {
            if (w.window, w.points_per_frame, w.channels) != (t_len, n, ch)
                || w.centers.len() != t_len
            {
                return Err(NetError::Contract(format!(
                    "window is {}×{}×{}, network expects {t_len}×{n}×{ch}",
                    w.window, w.points_per_frame, w.channels
                )));
            }
        }
        let frames = batch * t_len;
        let nj = self.template.n_joints;
        let mut relative = Vec::with_capacity(frames * n * ch);
        let mut centers = Vec::with_capacity(frames * 3);
        let mut next_ref = Vec::with_capacity(frames * 3);
        for w in windows {
            let last = w.centers[t_len - 1];
            for (t, center) in w.centers.iter().enumerate() {
                for p in w.frame(t).chunks_exact(ch) {
                    relative.extend((0..3).map(|k| p[k] - center[k]));
                    relative.extend_from_slice(&p[3..]);
                }
                centers.extend_from_slice(center);
                next_ref.extend_from_slice(&last);
            }
        }
        let centers = ctx.g.constant_from(&[frames, 3], centers)?;
        let next_ref = ctx.g.constant_from(&[frames, 3], next_ref)?;

        let spatial = self.backbone.forward(ctx, frames, &relative)?;
        let global = self.gru.forward(ctx, spatial, batch, t_len)?;
        let global = ctx.dropout(global, c.dropout, GLOBAL_DROPOUT)?;

        let step = self.translation_head.forward(ctx, global)?;
        let gamma_next = ctx.g.add(step, next_ref)?;

        let coarse_rel = self.skeleton_head.forward(ctx, global)?;
        let coarse_rel = ctx.g.reshape(coarse_rel, &[frames * nj, 3])?;
        let grouped = ctx.g.reshape(coarse_rel, &[frames, nj, 3])?;
        let center_rows = ctx.g.reshape(centers, &[frames, 1, 3])?;
        let coarse_joints = ctx.g.add(grouped, center_rows)?;

        let per_joint: Vec<usize> = (0..frames)
            .flat_map(|f| std::iter::repeat_n(f, nj))
            .collect();
        let broadcast = ctx.g.gather_rows(global, &per_joint)?;
        let fused = ctx.g.concat_last_axis(&[coarse_rel, broadcast])?;
        let fused = self.fusion.forward(ctx, fused)?;
        let width = ctx.g.shape(fused)[1];
        let fused = ctx.g.reshape(fused, &[frames, nj, width])?;
        let embedding = ctx.p(self.joint_embedding);
        let fused = ctx.g.add(fused, embedding)?;
        let fused = ctx.g.reshape(fused, &[frames * nj, width])?;
        let attended = self.attention.forward(ctx, fused, frames, nj)?;

        let params = self.regressor.forward(ctx, attended.tokens, frames, nj)?;
        let gamma = ctx.g.add(params.gamma, centers)?;
        let body = BodyGraph::new(&self.template).forward(
            ctx.g,
            params.theta,
            params.beta,
            gamma,
            with_vertices,
        )?;
        Ok(ModelOutput {
            batch,
            window: t_len,
            gamma_next,
            coarse_joints,
            theta: params.theta,
            beta: params.beta,
            gamma,
            joints: body.joints,
            vertices: body.vertices,
            rotations: body.rotations,
            attention: attended.weights,
        })
    }
}
