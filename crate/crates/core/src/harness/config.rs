use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::autodiff::{AdamConfig, DecayMode};
use crate::net::NetConfig;

/// Everything that determines a training run. Points per frame, dropout and
/// the loss scale factors live in `net`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    /// Share of sequences held out for validation (rounded down).
    pub validation_fraction: f64,
    pub seed: u64,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<u64>,
    /// Frames between consecutive training windows; `None` uses the window length.
    pub window_stride: Option<usize>,
    /// Standard deviation (m) of the per-window offset added to the
    /// ground-truth crop centers during training.
    pub crop_jitter: f64,
    /// Chance that a training window is cropped with the box held at its
    /// first frame's root instead of following the body.
    pub static_crop_probability: f64,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            decay_mode: DecayMode::WeightDecay,
            validation_fraction: 0.1,
            seed: 0,
            max_steps: None,
            window_stride: None,
            crop_jitter: 0.05,
            static_crop_probability: 0.25,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.net.validate()?;
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        if self.window_stride == Some(0) {
            return bad("window_stride must be positive".into());
        }
        if !(self.crop_jitter >= 0.0 && self.crop_jitter.is_finite()) {
            return bad(format!(
                "crop_jitter must be non-negative, got {}",
                self.crop_jitter
            ));
        }
        if !(0.0..=1.0).contains(&self.static_crop_probability) {
            return bad(format!(
                "static_crop_probability must lie in [0, 1], got {}",
                self.static_crop_probability
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            decay_mode: self.decay_mode,
            ..AdamConfig::default()
        }
    }

    pub fn stride(&self) -> usize {
        self.window_stride.unwrap_or(self.net.window)
    }
}

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&json)))
}
