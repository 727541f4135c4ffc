use super::nn::{Ctx, Init, Linear, Mlp};
use super::NetError;
use crate::autodiff::{ParamStore, Var};
use crate::body::IDENTITY_6D;

/// Multi-head scaled dot-product self-attention over joint tokens.
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub merge: Linear,
    pub heads: usize,
    pub width: usize,
}

pub struct AttentionOutput {
    /// `[F·N_J, D]`
    pub tokens: Var,
    /// `[F·heads, N_J, N_J]`, rows sum to one.
    pub weights: Var,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        width: usize,
        heads: usize,
    ) -> Result<Self, NetError> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(NetError::Config(format!(
                "{heads} heads do not divide the token width {width}"
            )));
        }
        Ok(Self {
            query: Linear::new(store, init, &format!("{name}.query"), width, width, false),
            key: Linear::new(store, init, &format!("{name}.key"), width, width, false),
            value: Linear::new(store, init, &format!("{name}.value"), width, width, false),
            merge: Linear::new(store, init, &format!("{name}.merge"), width, width, true),
            heads,
            width,
        })
    }

    /// `tokens: [F·N_J, D]`, `N_J` tokens per frame.
    pub fn forward(
        &self,
        ctx: &mut Ctx,
        tokens: Var,
        frames: usize,
        n_tokens: usize,
    ) -> Result<AttentionOutput, NetError> {
        let (h, d) = (self.heads, self.width);
        let dk = d / h;
        let split = |ctx: &mut Ctx, l: &Linear| -> Result<Var, NetError> {
            let y = l.forward(ctx, tokens)?;
            let y = ctx.g.reshape(y, &[frames, n_tokens, h, dk])?;
            let y = ctx.g.permute(y, &[0, 2, 1, 3])?;
            Ok(ctx.g.reshape(y, &[frames * h, n_tokens, dk])?)
        };
        let q = split(ctx, &self.query)?;
        let k = split(ctx, &self.key)?;
        let v = split(ctx, &self.value)?;
        let kt = ctx.g.permute(k, &[0, 2, 1])?;
        let scores = ctx.g.bmm(q, kt)?;
        let scores = ctx.g.scale(scores, 1.0 / (dk as f64).sqrt());
        let weights = ctx.g.softmax(scores, 2)?;
        let o = ctx.g.bmm(weights, v)?;
        let o = ctx.g.reshape(o, &[frames, h, n_tokens, dk])?;
        let o = ctx.g.permute(o, &[0, 2, 1, 3])?;
        let o = ctx.g.reshape(o, &[frames * n_tokens, d])?;
        let tokens = self.merge.forward(ctx, o)?;
        Ok(AttentionOutput { tokens, weights })
    }
}

/// Body-parameter heads on the attended joint tokens: a shared per-joint
/// pose head, and shape/translation heads on the mean-pooled token.
pub struct ParamRegressor {
    pub pose: Mlp,
    pub shape: Mlp,
    pub translation: Mlp,
    pub n_shape: usize,
}

pub struct RegressedParams {
    /// `[F, 6·N_J]`
    pub theta: Var,
    /// `[F, N_β]`
    pub beta: Var,
    /// `[F, 3]`, relative to the frame's crop center.
    pub gamma: Var,
}

impl ParamRegressor {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        width: usize,
        pose_hidden: &[usize],
        param_hidden: &[usize],
        n_shape: usize,
    ) -> Self {
        let widths =
            |hidden: &[usize], out: usize| hidden.iter().copied().chain([out]).collect::<Vec<_>>();
        let pose = Mlp::new(
            store,
            init,
            "pose_head",
            width,
            &widths(pose_hidden, 6),
            false,
        );
        // start every joint at the identity rotation
        let last = pose.layers.last().expect("pose head has an output layer");
        store
            .get_mut(last.bias.expect("biased"))
            .values_mut()
            .copy_from_slice(&IDENTITY_6D);
        let shape = Mlp::new(
            store,
            init,
            "shape_head",
            width,
            &widths(param_hidden, n_shape),
            false,
        );
        let translation = Mlp::new(
            store,
            init,
            "root_head",
            width,
            &widths(param_hidden, 3),
            false,
        );
        Self {
            pose,
            shape,
            translation,
            n_shape,
        }
    }

    /// `tokens: [F·N_J, D]`.
    pub fn forward(
        &self,
        ctx: &mut Ctx,
        tokens: Var,
        frames: usize,
        n_joints: usize,
    ) -> Result<RegressedParams, NetError> {
        let d = ctx.g.shape(tokens)[1];
        let theta = self.pose.forward(ctx, tokens)?;
        let theta = ctx.g.reshape(theta, &[frames, 6 * n_joints])?;
        let grouped = ctx.g.reshape(tokens, &[frames, n_joints, d])?;
        let pooled = ctx.g.mean_axis(grouped, 1, false)?;
        let beta = self.shape.forward(ctx, pooled)?;
        let gamma = self.translation.forward(ctx, pooled)?;
        Ok(RegressedParams { theta, beta, gamma })
    }
}
