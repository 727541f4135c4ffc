//! Central finite-difference gradient checks.
//!
//! Relative error for one tensor is `max|analytic − numeric| / max(max|analytic|,
//! max|numeric|, 1e-8)`.

use super::{AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// One entry per checked tensor: `(label, relative error, elements checked)`.
    pub entries: Vec<(String, f64, usize)>,
}

impl GradCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64, usize)> {
        self.entries.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(1e-8, f64::max);
    diff / scale
}

fn scalar(g: &Graph, v: Var) -> f64 {
    g.value(v)[0]
}

/// Checks `d loss / d input` for free-standing input tensors.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheck, AutodiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    let eval = |ins: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t)).collect();
        let loss = build(&mut g, &vars)?;
        Ok(scalar(&g, loss))
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(&t.clone().with_grad()))
        .collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let mut entries = Vec::new();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads
            .get(v)
            .map_or_else(|| vec![0.0; inputs[i].len()], <[f64]>::to_vec);
        let mut numeric = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let orig = work[i].values()[j];
            work[i].values_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].values_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].values_mut()[j] = orig;
            numeric[j] = (up - down) / (2.0 * h);
        }
        entries.push((
            format!("input{i}"),
            rel_err(&analytic, &numeric),
            numeric.len(),
        ));
    }
    Ok(GradCheck { entries })
}

/// Checks `d loss / d param` for parameters in a store. When `max_elements`
/// is set, at most that many evenly spaced elements per tensor are probed.
pub fn check_params<F>(
    store: &ParamStore,
    ids: &[ParamId],
    h: f64,
    max_elements: Option<usize>,
    build: F,
) -> Result<GradCheck, AutodiffError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    let grads = g.backward(loss)?;
    let mut analytic_store = store.clone();
    analytic_store.clear_grads();
    grads.accumulate_into(&mut analytic_store);
    drop(g);

    let mut work = store.clone();
    let mut entries = Vec::new();
    for &id in ids {
        let n = store.get(id).len();
        let probes: Vec<usize> = match max_elements {
            Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
            _ => (0..n).collect(),
        };
        let full = analytic_store
            .get(id)
            .grad()
            .map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut analytic = Vec::with_capacity(probes.len());
        let mut numeric = Vec::with_capacity(probes.len());
        for &j in &probes {
            let orig = work.get(id).values()[j];
            work.get_mut(id).values_mut()[j] = orig + h;
            let mut gu = Graph::new();
            let lu = build(&mut gu, &work)?;
            let up = scalar(&gu, lu);
            work.get_mut(id).values_mut()[j] = orig - h;
            let mut gd = Graph::new();
            let ld = build(&mut gd, &work)?;
            let down = scalar(&gd, ld);
            work.get_mut(id).values_mut()[j] = orig;
            analytic.push(full[j]);
            numeric.push((up - down) / (2.0 * h));
        }
        entries.push((
            store.name(id).to_string(),
            rel_err(&analytic, &numeric),
            probes.len(),
        ));
    }
    Ok(GradCheck { entries })
}
