use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamStore};

/// How the configured decay rate is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// AdamW-style: `p ← p − lr·decay·p` before the moment update.
    #[default]
    WeightDecay,
    /// Inverse-time learning-rate schedule `lr / (1 + decay·t)`, no weight decay.
    InverseTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
            decay_mode: DecayMode::WeightDecay,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let first_moment = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let second_moment = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            step_count: 0,
            first_moment,
            second_moment,
        }
    }

    /// One bias-corrected Adam update over every parameter that requires a
    /// gradient; gradients are zeroed afterwards.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<(), AutodiffError> {
        if self.first_moment.len() != params.len() {
            return Err(AutodiffError::Contract(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (name, t) in params.iter() {
            if t.requires_grad() && t.grad().is_none() {
                return Err(AutodiffError::Contract(format!(
                    "parameter {name} has no gradient"
                )));
            }
        }
        let c = &self.config;
        let t = self.step_count + 1;
        let bc1 = 1.0 - c.beta1.powf(t as f64);
        let bc2 = 1.0 - c.beta2.powf(t as f64);
        let (lr, wd) = match c.decay_mode {
            DecayMode::WeightDecay => (c.learning_rate, c.weight_decay),
            DecayMode::InverseTime => (
                c.learning_rate / (1.0 + c.weight_decay * self.step_count as f64),
                0.0,
            ),
        };
        for (i, (_, p)) in params.iter_mut().enumerate() {
            if !p.requires_grad() {
                continue;
            }
            let grad = p.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            for (j, w) in p.values_mut().iter_mut().enumerate() {
                let gj = grad[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * wd * *w;
                *w -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
            p.zero_grad();
        }
        self.step_count = t;
        Ok(())
    }
}
