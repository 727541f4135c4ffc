use super::nn::{Ctx, Init, Linear};
use super::NetError;
use crate::autodiff::{ParamStore, Var};

/// Gate layout along the last axis is `[reset | update | candidate]`.
pub struct GruCell {
    pub input: Linear,
    pub hidden: Linear,
    pub size: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        din: usize,
        size: usize,
    ) -> Self {
        Self {
            input: Linear::new(store, init, &format!("{name}.input"), din, 3 * size, true),
            hidden: Linear::new(store, init, &format!("{name}.hidden"), size, 3 * size, true),
            size,
        }
    }

    /// One step from precomputed input gates `xp: [B, 3H]` and state `h: [B, H]`.
    pub fn step(&self, ctx: &mut Ctx, xp: Var, h: Var) -> Result<Var, NetError> {
        let s = self.size;
        let hp = self.hidden.forward(ctx, h)?;
        let g = &mut *ctx.g;
        let (xr, xz, xn) = (
            g.slice_last_axis(xp, 0, s)?,
            g.slice_last_axis(xp, s, s)?,
            g.slice_last_axis(xp, 2 * s, s)?,
        );
        let (hr, hz, hn) = (
            g.slice_last_axis(hp, 0, s)?,
            g.slice_last_axis(hp, s, s)?,
            g.slice_last_axis(hp, 2 * s, s)?,
        );
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let rn = g.mul(r, hn)?;
        let n = g.add(xn, rn)?;
        let n = g.tanh(n);
        // h' = (1 - z) n + z h
        let d = g.sub(h, n)?;
        let zd = g.mul(z, d)?;
        Ok(g.add(n, zd)?)
    }
}

/// Forward and backward GRUs over the window axis, concatenated per frame.
pub struct BiGru {
    pub forward_cell: GruCell,
    pub backward_cell: GruCell,
}

impl BiGru {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        din: usize,
        hidden: usize,
    ) -> Self {
        Self {
            forward_cell: GruCell::new(store, init, &format!("{name}.fwd"), din, hidden),
            backward_cell: GruCell::new(store, init, &format!("{name}.bwd"), din, hidden),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.forward_cell.size
    }

    /// `x: [B·T, D]` with rows ordered `b·T + t`; returns `[B·T, 2H]`.
    pub fn forward(
        &self,
        ctx: &mut Ctx,
        x: Var,
        batch: usize,
        window: usize,
    ) -> Result<Var, NetError> {
        let rows = ctx.g.shape(x)[0];
        if rows != batch * window {
            return Err(NetError::Contract(format!(
                "GRU input has {rows} rows, expected {batch}×{window}"
            )));
        }
        let run = |cell: &GruCell,
                   ctx: &mut Ctx,
                   order: &mut dyn Iterator<Item = usize>|
         -> Result<Vec<Option<Var>>, NetError> {
            let xp = cell.input.forward(ctx, x)?;
            let mut h = ctx
                .g
                .constant_from(&[batch, cell.size], vec![0.0; batch * cell.size])?;
            let mut out = vec![None; window];
            for t in order {
                let idx: Vec<usize> = (0..batch).map(|b| b * window + t).collect();
                let xt = ctx.g.gather_rows(xp, &idx)?;
                h = cell.step(ctx, xt, h)?;
                out[t] = Some(h);
            }
            Ok(out)
        };
        let fwd = run(&self.forward_cell, ctx, &mut (0..window))?;
        let bwd = run(&self.backward_cell, ctx, &mut (0..window).rev())?;
        let mut parts = Vec::with_capacity(2 * window);
        for t in 0..window {
            parts.push(fwd[t].expect("every step visited"));
            parts.push(bwd[t].expect("every step visited"));
        }
        let y = ctx.g.concat_last_axis(&parts)?;
        Ok(ctx.g.reshape(y, &[batch * window, self.out_dim()])?)
    }
}
