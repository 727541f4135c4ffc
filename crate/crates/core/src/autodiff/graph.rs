//! Define-by-run computation graph.
//!
//! Every op appends a node holding its forward value; [`Graph::backward`]
//! sweeps the nodes in reverse insertion order, which is a valid reverse
//! topological order because a node can only reference earlier nodes.
//!
//! Lifetime policy: a graph records one forward pass. `backward` leaves the
//! graph untouched and returns a fresh [`Gradients`] table, so it may be
//! called again (for example on a different scalar); callers drop the graph
//! once the gradients have been folded into the parameter store.

use super::tensor::{ParamId, ParamStore, Tensor};
use super::AutodiffError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn node_id(self) -> usize {
        self.0
    }
}

/// Index maps from an output element to the source element of each operand.
/// `None` means the operand already has the output shape.
#[derive(Debug)]
struct Broadcast {
    a: Option<Vec<usize>>,
    b: Option<Vec<usize>>,
}

#[derive(Debug)]
enum Op {
    Leaf { param: Option<ParamId> },
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Div(Var, Var, Broadcast),
    Affine { x: Var, scale: f64 },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Sqrt(Var),
    Acos(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    MatMul(Var, Var),
    Bmm(Var, Var),
    Softmax { x: Var, axis: usize },
    SumAll(Var),
    MeanAll(Var),
    SumAxis { x: Var, axis: usize },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Reshape(Var),
    Permute { x: Var, map: Vec<usize> },
    GatherRows { x: Var, index: Vec<usize> },
    Mask { x: Var, mask: Vec<f64> },
    Cross(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank {
            a[i + a.len() - rank]
        } else {
            1
        };
        let db = if i + b.len() >= rank {
            b[i + b.len() - rank]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn broadcast_map(input: &[usize], out: &[usize]) -> Option<Vec<usize>> {
    if input == out {
        return None;
    }
    let rank = out.len();
    let in_strides = strides(input);
    // stride of each output axis inside the input, 0 where broadcast
    let mut eff = vec![0; rank];
    for i in 0..rank {
        if i + input.len() >= rank {
            let j = i + input.len() - rank;
            if input[j] != 1 {
                eff[i] = in_strides[j];
            }
        }
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..total {
        map.push(src);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += eff[ax];
            if idx[ax] < out[ax] {
                break;
            }
            src -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Some(map)
}

#[inline]
fn at(map: &Option<Vec<usize>>, i: usize) -> usize {
    match map {
        Some(m) => m[i],
        None => i,
    }
}

/// Returns `(outer, dim, inner)` for a reduction along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("graph nodes hold valid extents")
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(value.len(), numel(&shape));
        self.nodes.push(Node {
            value,
            shape,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a leaf. It participates in differentiation iff the tensor
    /// requires a gradient.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(
            t.values().to_vec(),
            t.shape().to_vec(),
            t.requires_grad(),
            Op::Leaf { param: None },
        )
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(
            t.values().to_vec(),
            t.shape().to_vec(),
            false,
            Op::Leaf { param: None },
        )
    }

    pub fn constant_from(
        &mut self,
        shape: &[usize],
        values: Vec<f64>,
    ) -> Result<Var, AutodiffError> {
        let t = Tensor::new(shape, values)?;
        Ok(self.push(
            t.values().to_vec(),
            shape.to_vec(),
            false,
            Op::Leaf { param: None },
        ))
    }

    /// Binds a stored parameter into the graph. Gradients for it are routed
    /// back to the store by [`Gradients::accumulate_into`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        self.push(
            t.values().to_vec(),
            t.shape().to_vec(),
            t.requires_grad(),
            Op::Leaf { param: Some(id) },
        )
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: fn(Var, Var, Broadcast) -> Op,
    ) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb).ok_or(AutodiffError::Dimension {
            op: name,
            lhs: sa.clone(),
            rhs: sb.clone(),
        })?;
        let bc = Broadcast {
            a: broadcast_map(&sa, &out_shape),
            b: broadcast_map(&sb, &out_shape),
        };
        let (va, vb) = (self.value(a), self.value(b));
        let value = (0..numel(&out_shape))
            .map(|i| f(va[at(&bc.a, i)], vb[at(&bc.b, i)]))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, out_shape, rg, make(a, b, bc)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        self.push(value, shape, rg, op)
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, |v| scale * v + shift, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn acos(&mut self, x: Var) -> Var {
        self.unary(x, f64::acos, Op::Acos(x))
    }

    /// Gradient passes only where `lo < x < hi`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AutodiffError::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, vec![m, n], rg, Op::MatMul(a, b)))
    }

    /// Batched matrix product `[B×m×k] · [B×k×n] → [B×m×n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(AutodiffError::Dimension {
                op: "bmm",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bt * m * n];
        let (va, vb) = (self.value(a), self.value(b));
        for i in 0..bt {
            matmul_into(
                &va[i * m * k..(i + 1) * m * k],
                &vb[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, vec![bt, m, n], rg, Op::Bmm(a, b)))
    }

    /// Numerically stable softmax along `axis` (max subtracted per slice).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::Contract(format!(
                "softmax axis {axis} out of range for {shape:?}"
            )));
        }
        let (outer, dim, inner) = axis_split(&shape, axis);
        let v = self.value(x);
        let mut out = vec![0.0; v.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |d: usize| (o * dim + d) * inner + i;
                let max = (0..dim)
                    .map(|d| v[idx(d)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for d in 0..dim {
                    let e = (v[idx(d)] - max).exp();
                    out[idx(d)] = e;
                    sum += e;
                }
                for d in 0..dim {
                    out[idx(d)] /= sum;
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, shape, rg, Op::Softmax { x, axis }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(&[x]);
        self.push(vec![s], vec![1], rg, Op::SumAll(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[x]);
        self.push(vec![s], vec![1], rg, Op::MeanAll(x))
    }

    /// Sums over `axis`. With `keepdim` the axis stays with extent 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize, keepdim: bool) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::Contract(format!(
                "sum axis {axis} out of range for {shape:?}"
            )));
        }
        let (outer, dim, inner) = axis_split(&shape, axis);
        let v = self.value(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let src = &v[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                out[o * inner..(o + 1) * inner]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(a, b)| *a += b);
            }
        }
        let mut out_shape = shape.clone();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
            if out_shape.is_empty() {
                out_shape.push(1);
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, out_shape, rg, Op::SumAxis { x, axis }))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize, keepdim: bool) -> Result<Var, AutodiffError> {
        let n = *self
            .shape(x)
            .get(axis)
            .ok_or_else(|| AutodiffError::Contract(format!("mean axis {axis} out of range")))?;
        let s = self.sum_axis(x, axis, keepdim)?;
        Ok(self.scale(s, 1.0 / n as f64))
    }

    pub fn concat_last_axis(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = *parts
            .first()
            .ok_or_else(|| AutodiffError::Contract("concat of zero parts".into()))?;
        let lead = {
            let s = self.shape(first);
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                return Err(AutodiffError::Dimension {
                    op: "concat",
                    lhs: self.shape(first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(s[s.len() - 1]);
        }
        let rows = numel(&lead);
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let rg = self.rg(parts);
        Ok(self.push(out, shape, rg, Op::Concat(parts.to_vec())))
    }

    /// Takes `len` entries of the last axis starting at `start`.
    pub fn slice_last_axis(
        &mut self,
        x: Var,
        start: usize,
        len: usize,
    ) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        let w = *shape.last().expect("non-empty shape");
        if len == 0 || start + len > w {
            return Err(AutodiffError::Contract(format!(
                "slice {start}..{} out of range for last extent {w}",
                start + len
            )));
        }
        let rows = numel(&shape) / w;
        let v = self.value(x);
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&v[r * w + start..r * w + start + len]);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        let rg = self.rg(&[x]);
        Ok(self.push(out, out_shape, rg, Op::Slice { x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        if numel(shape) != self.value(x).len() || shape.is_empty() || shape.contains(&0) {
            return Err(AutodiffError::Dimension {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = self.value(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(value, shape.to_vec(), rg, Op::Reshape(x)))
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes
                .iter()
                .any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true))
        {
            return Err(AutodiffError::Contract(format!(
                "invalid permutation {axes:?} for {shape:?}"
            )));
        }
        let in_strides = strides(&shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let eff: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let total = numel(&shape);
        let mut map = Vec::with_capacity(total);
        let mut idx = vec![0usize; shape.len()];
        let mut src = 0usize;
        for _ in 0..total {
            map.push(src);
            for ax in (0..out_shape.len()).rev() {
                idx[ax] += 1;
                src += eff[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                src -= eff[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
        let v = self.value(x);
        let value = map.iter().map(|&i| v[i]).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(value, out_shape, rg, Op::Permute { x, map }))
    }

    /// Selects rows (entries of the first axis) by index; repeats allowed.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        let rows = shape[0];
        if index.is_empty() {
            return Err(AutodiffError::Contract("gather of zero rows".into()));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(AutodiffError::Contract(format!(
                "row index {bad} out of range for {rows} rows"
            )));
        }
        let w = numel(&shape[1..]);
        let v = self.value(x);
        let mut out = Vec::with_capacity(index.len() * w);
        for &i in index {
            out.extend_from_slice(&v[i * w..(i + 1) * w]);
        }
        let mut out_shape = shape;
        out_shape[0] = index.len();
        let rg = self.rg(&[x]);
        Ok(self.push(
            out,
            out_shape,
            rg,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
        ))
    }

    /// Elementwise product with a constant mask (dropout and friends).
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Result<Var, AutodiffError> {
        if mask.len() != self.value(x).len() {
            return Err(AutodiffError::Dimension {
                op: "mask",
                lhs: self.shape(x).to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let value = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(a, m)| a * m)
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(value, shape, rg, Op::Mask { x, mask }))
    }

    /// Cross product over a last axis of extent 3.
    pub fn cross(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || *sa.last().unwrap() != 3 {
            return Err(AutodiffError::Dimension {
                op: "cross",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let shape = sa.to_vec();
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = vec![0.0; va.len()];
        for r in 0..va.len() / 3 {
            let (x, y) = (&va[3 * r..3 * r + 3], &vb[3 * r..3 * r + 3]);
            out[3 * r..3 * r + 3].copy_from_slice(&cross3(x, y));
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, shape, rg, Op::Cross(a, b)))
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate across
    /// fan-out. Only nodes that require a gradient are visited.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Leaf { param: Some(p) } if n.requires_grad => Some((i, p)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let y = &node.value;
        let nodes = &self.nodes;
        macro_rules! with_grad {
            ($v:expr, |$buf:ident| $body:block) => {
                if let Some($buf) = grad_slot(nodes, grads, $v) $body
            };
        }
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Add(a, b, bc) => {
                with_grad!(*a, |ga| {
                    g.iter()
                        .enumerate()
                        .for_each(|(i, gi)| ga[at(&bc.a, i)] += gi)
                });
                with_grad!(*b, |gb| {
                    g.iter()
                        .enumerate()
                        .for_each(|(i, gi)| gb[at(&bc.b, i)] += gi)
                });
            }
            Op::Sub(a, b, bc) => {
                with_grad!(*a, |ga| {
                    g.iter()
                        .enumerate()
                        .for_each(|(i, gi)| ga[at(&bc.a, i)] += gi)
                });
                with_grad!(*b, |gb| {
                    g.iter()
                        .enumerate()
                        .for_each(|(i, gi)| gb[at(&bc.b, i)] -= gi)
                });
            }
            Op::Mul(a, b, bc) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                with_grad!(*a, |ga| {
                    for (i, gi) in g.iter().enumerate() {
                        ga[at(&bc.a, i)] += gi * vb[at(&bc.b, i)];
                    }
                });
                with_grad!(*b, |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        gb[at(&bc.b, i)] += gi * va[at(&bc.a, i)];
                    }
                });
            }
            Op::Div(a, b, bc) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                with_grad!(*a, |ga| {
                    for (i, gi) in g.iter().enumerate() {
                        ga[at(&bc.a, i)] += gi / vb[at(&bc.b, i)];
                    }
                });
                with_grad!(*b, |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        let d = vb[at(&bc.b, i)];
                        gb[at(&bc.b, i)] -= gi * va[at(&bc.a, i)] / (d * d);
                    }
                });
            }
            Op::Affine { x, scale } => {
                with_grad!(*x, |gx| {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b)
                });
            }
            Op::Relu(x) => {
                let vx = &nodes[x.0].value;
                with_grad!(*x, |gx| {
                    for i in 0..g.len() {
                        if vx[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                with_grad!(*x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Tanh(x) => {
                with_grad!(*x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::Abs(x) => {
                let vx = &nodes[x.0].value;
                with_grad!(*x, |gx| {
                    for i in 0..g.len() {
                        if vx[i] != 0.0 {
                            gx[i] += g[i] * vx[i].signum();
                        }
                    }
                });
            }
            Op::Sqrt(x) => {
                with_grad!(*x, |gx| {
                    for i in 0..g.len() {
                        if y[i] > 0.0 {
                            gx[i] += g[i] * 0.5 / y[i];
                        }
                    }
                });
            }
            Op::Acos(x) => {
                let vx = &nodes[x.0].value;
                with_grad!(*x, |gx| {
                    for i in 0..g.len() {
                        gx[i] -= g[i] / (1.0 - vx[i] * vx[i]).sqrt();
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let vx = &nodes[x.0].value;
                with_grad!(*x, |gx| {
                    for i in 0..g.len() {
                        if vx[i] > *lo && vx[i] < *hi {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (&nodes[a.0].shape, &nodes[b.0].shape);
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                with_grad!(*a, |ga| { matmul_grad_a(g, vb, ga, m, k, n) });
                with_grad!(*b, |gb| { matmul_grad_b(g, va, gb, m, k, n) });
            }
            Op::Bmm(a, b) => {
                let (sa, sb) = (&nodes[a.0].shape, &nodes[b.0].shape);
                let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                with_grad!(*a, |ga| {
                    for i in 0..bt {
                        matmul_grad_a(
                            &g[i * m * n..(i + 1) * m * n],
                            &vb[i * k * n..(i + 1) * k * n],
                            &mut ga[i * m * k..(i + 1) * m * k],
                            m,
                            k,
                            n,
                        );
                    }
                });
                with_grad!(*b, |gb| {
                    for i in 0..bt {
                        matmul_grad_b(
                            &g[i * m * n..(i + 1) * m * n],
                            &va[i * m * k..(i + 1) * m * k],
                            &mut gb[i * k * n..(i + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let (outer, dim, inner) = axis_split(&node.shape, *axis);
                with_grad!(*x, |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |d: usize| (o * dim + d) * inner + i;
                            let dot: f64 = (0..dim).map(|d| g[idx(d)] * y[idx(d)]).sum();
                            for d in 0..dim {
                                gx[idx(d)] += y[idx(d)] * (g[idx(d)] - dot);
                            }
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                with_grad!(*x, |gx| { gx.iter_mut().for_each(|v| *v += g[0]) });
            }
            Op::MeanAll(x) => {
                with_grad!(*x, |gx| {
                    let s = g[0] / gx.len() as f64;
                    gx.iter_mut().for_each(|v| *v += s);
                });
            }
            Op::SumAxis { x, axis } => {
                let (outer, dim, inner) = axis_split(&nodes[x.0].shape, *axis);
                with_grad!(*x, |gx| {
                    for o in 0..outer {
                        for d in 0..dim {
                            let dst = &mut gx[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                            dst.iter_mut()
                                .zip(&g[o * inner..(o + 1) * inner])
                                .for_each(|(a, b)| *a += b);
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let total = *node.shape.last().unwrap();
                let rows = g.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = *nodes[p.0].shape.last().unwrap();
                    with_grad!(p, |gp| {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            gp[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(a, b)| *a += b);
                        }
                    });
                    offset += w;
                }
            }
            Op::Slice { x, start } => {
                let w_in = *nodes[x.0].shape.last().unwrap();
                let w = *node.shape.last().unwrap();
                let rows = g.len() / w;
                with_grad!(*x, |gx| {
                    for r in 0..rows {
                        let dst = &mut gx[r * w_in + start..r * w_in + start + w];
                        dst.iter_mut()
                            .zip(&g[r * w..(r + 1) * w])
                            .for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::Reshape(x) => {
                with_grad!(*x, |gx| { gx.iter_mut().zip(g).for_each(|(a, b)| *a += b) });
            }
            Op::Permute { x, map } => {
                with_grad!(*x, |gx| {
                    for (i, &src) in map.iter().enumerate() {
                        gx[src] += g[i];
                    }
                });
            }
            Op::GatherRows { x, index } => {
                let w = numel(&nodes[x.0].shape[1..]);
                with_grad!(*x, |gx| {
                    for (r, &src) in index.iter().enumerate() {
                        let dst = &mut gx[src * w..(src + 1) * w];
                        dst.iter_mut()
                            .zip(&g[r * w..(r + 1) * w])
                            .for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::Mask { x, mask } => {
                with_grad!(*x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * mask[i];
                    }
                });
            }
            Op::Cross(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                // d(a×b)/da applied to g is b×g; d(a×b)/db applied to g is g×a
                with_grad!(*a, |ga| {
                    for r in 0..g.len() / 3 {
                        let c = cross3(&vb[3 * r..3 * r + 3], &g[3 * r..3 * r + 3]);
                        ga[3 * r..3 * r + 3]
                            .iter_mut()
                            .zip(c)
                            .for_each(|(x, y)| *x += y);
                    }
                });
                with_grad!(*b, |gb| {
                    for r in 0..g.len() / 3 {
                        let c = cross3(&g[3 * r..3 * r + 3], &va[3 * r..3 * r + 3]);
                        gb[3 * r..3 * r + 3]
                            .iter_mut()
                            .zip(c)
                            .for_each(|(x, y)| *x += y);
                    }
                });
            }
        }
    }
}

/// Gradient buffer of `v`, allocated on first touch; `None` when `v` does
/// not require a gradient.
fn grad_slot<'a>(
    nodes: &[Node],
    grads: &'a mut [Option<Vec<f64>>],
    v: Var,
) -> Option<&'a mut Vec<f64>> {
    let n = &nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]))
}

fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            row.iter_mut().zip(brow).for_each(|(o, bv)| *o += aip * bv);
        }
    }
}

/// `ga += g · bᵀ`
fn matmul_grad_a(g: &[f64], b: &[f64], ga: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `gb += aᵀ · g`
fn matmul_grad_b(g: &[f64], a: &[f64], gb: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            gb[p * n..(p + 1) * n]
                .iter_mut()
                .zip(grow)
                .for_each(|(o, gv)| *o += aip * gv);
        }
    }
}

/// Gradients of one backward sweep, indexed by graph node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, ParamId)>,
}

impl Gradients {
    /// Gradient of a leaf, if it was reached by the sweep.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds every parameter gradient into the store (`+=`); parameters with
    /// `requires_grad == false` are left untouched.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(node, pid) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.get_mut(pid).accumulate_grad(g);
            }
        }
    }
}
