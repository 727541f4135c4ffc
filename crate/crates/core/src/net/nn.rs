//! Parameterized building blocks shared by the network stages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NetError;
use crate::autodiff::{linear, mix_seed, Graph, ParamId, ParamStore, Tensor, Var};

/// One forward pass: the graph, the weights, and whether dropout is live.
pub struct Ctx<'g, 's> {
    pub g: &'g mut Graph,
    pub store: &'s ParamStore,
    pub training: bool,
    /// Dropout masks are keyed by (seed, layer, step).
    pub seed: u64,
    pub step: u64,
    cache: Vec<Option<Var>>,
}

impl<'g, 's> Ctx<'g, 's> {
    pub fn new(g: &'g mut Graph, store: &'s ParamStore) -> Self {
        Self {
            g,
            store,
            training: false,
            seed: 0,
            step: 0,
            cache: vec![None; store.len()],
        }
    }

    pub fn training(mut self, seed: u64, step: u64) -> Self {
        self.training = true;
        self.seed = seed;
        self.step = step;
        self
    }

    /// Graph leaf for a parameter, recorded once per pass.
    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.cache[id.index()] {
            return v;
        }
        let v = self.g.param(self.store, id);
        self.cache[id.index()] = Some(v);
        v
    }

    pub fn dropout(&mut self, x: Var, ratio: f64, layer: u64) -> Result<Var, NetError> {
        let seed = mix_seed(&[self.seed, layer, self.step]);
        Ok(crate::autodiff::dropout(
            self.g,
            x,
            ratio,
            self.training,
            seed,
        )?)
    }
}

/// Seeded weight source; every tensor draws from `U(-1/√fan_in, 1/√fan_in)`.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let values = (0..n)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        Tensor::new(shape, values).expect("valid shape")
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        din: usize,
        dout: usize,
        bias: bool,
    ) -> Self {
        let weight = store.register(format!("{name}.weight"), init.uniform(&[din, dout], din));
        let bias = bias.then(|| store.register(format!("{name}.bias"), init.uniform(&[dout], din)));
        Self {
            weight,
            bias,
            din,
            dout,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var, NetError> {
        let w = ctx.p(self.weight);
        match self.bias {
            Some(b) => {
                let b = ctx.p(b);
                Ok(linear(ctx.g, x, w, b)?)
            }
            None => {
                let shape = ctx.g.shape(x).to_vec();
                let din = *shape.last().expect("non-empty");
                let rows = ctx.g.value(x).len() / din;
                let flat = ctx.g.reshape(x, &[rows, din])?;
                let y = ctx.g.matmul(flat, w)?;
                let mut out = shape;
                *out.last_mut().unwrap() = self.dout;
                Ok(ctx.g.reshape(y, &out)?)
            }
        }
    }
}

/// Stack of linear layers with ReLU between them (and after the last one
/// when `relu_last`).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_last: bool,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        din: usize,
        widths: &[usize],
        relu_last: bool,
    ) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = din;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(store, init, &format!("{name}.{i}"), d, w, true));
            d = w;
        }
        Self { layers, relu_last }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.dout)
    }

    pub fn forward(&self, ctx: &mut Ctx, mut x: Var) -> Result<Var, NetError> {
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(ctx, x)?;
            if i < last || self.relu_last {
                x = ctx.g.relu(x);
            }
        }
        Ok(x)
    }
}
