use serde::{Deserialize, Serialize};

use super::NetError;
use crate::body::TemplateSpec;

/// One set-abstraction stage: `N_in / sample_divisor` centers, ball query
/// of `radius` meters with `group_size` members, shared per-point MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaStage {
    pub sample_divisor: usize,
    pub radius: f64,
    pub group_size: usize,
    pub mlp: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossScales {
    pub pred: f64,
    pub joint: f64,
    pub theta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub joints: f64,
    pub vertices: f64,
}

impl Default for LossScales {
    fn default() -> Self {
        Self {
            pred: 1.0,
            joint: 1.0,
            theta: 1.0,
            beta: 1.0,
            gamma: 1.0,
            joints: 1.0,
            vertices: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Frames per window, T.
    pub window: usize,
    /// Points per cropped frame, N.
    pub points: usize,
    /// Channels per point, C (x, y, z first).
    pub channels: usize,
    pub template: TemplateSpec,
    pub sa_stages: Vec<SaStage>,
    /// Width of the per-frame spatial feature, D_f.
    pub feature_dim: usize,
    /// Width of the per-frame global feature (bidirectional GRU output).
    pub global_dim: usize,
    pub heads: usize,
    pub translation_hidden: Vec<usize>,
    pub skeleton_hidden: Vec<usize>,
    pub pose_hidden: Vec<usize>,
    pub param_hidden: Vec<usize>,
    pub dropout: f64,
    /// Crop box extent (x, y, z), meters.
    pub box_extent: [f64; 3],
    pub scales: LossScales,
    /// Seed of the weight initialization.
    pub init_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            window: 8,
            points: 1024,
            channels: 5,
            template: TemplateSpec::default(),
            sa_stages: vec![
                SaStage {
                    sample_divisor: 4,
                    radius: 0.2,
                    group_size: 16,
                    mlp: vec![64, 128],
                },
                SaStage {
                    sample_divisor: 16,
                    radius: 0.4,
                    group_size: 16,
                    mlp: vec![128, 256],
                },
            ],
            feature_dim: 512,
            global_dim: 1024,
            heads: 8,
            translation_hidden: vec![512, 128],
            skeleton_hidden: vec![512],
            pose_hidden: vec![256],
            param_hidden: vec![256],
            dropout: 0.2,
            box_extent: [1.0, 1.0, 3.0],
            scales: LossScales::default(),
            init_seed: 0,
        }
    }
}

impl NetConfig {
    /// Tiny configuration used for gradient checks and fast experiments.
    pub fn micro() -> Self {
        Self {
            window: 2,
            points: 16,
            template: TemplateSpec {
                n_joints: 4,
                n_vertices: 24,
                n_shape: 2,
                seed: 0,
            },
            sa_stages: vec![
                SaStage {
                    sample_divisor: 4,
                    radius: 0.3,
                    group_size: 4,
                    mlp: vec![8],
                },
                SaStage {
                    sample_divisor: 16,
                    radius: 0.6,
                    group_size: 4,
                    mlp: vec![8],
                },
            ],
            feature_dim: 8,
            global_dim: 8,
            heads: 2,
            translation_hidden: vec![8, 4],
            skeleton_hidden: vec![8],
            pose_hidden: vec![4],
            param_hidden: vec![4],
            ..Self::default()
        }
    }

    /// Number of sampled centers per stage for the configured N.
    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.sa_stages.len());
        for s in &self.sa_stages {
            sizes.push((self.points / s.sample_divisor).max(1));
        }
        sizes
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.window == 0 || self.points == 0 {
            return bad("window and points must be positive".into());
        }
        if self.channels < 4 {
            return bad(format!(
                "need at least 4 channels (x, y, z, Doppler), got {}",
                self.channels
            ));
        }
        if self.heads == 0 || !self.global_dim.is_multiple_of(self.heads) {
            return bad(format!(
                "{} heads do not divide the global width {}",
                self.heads, self.global_dim
            ));
        }
        if !self.global_dim.is_multiple_of(2) {
            return bad(format!(
                "global width {} must be even (two GRU directions)",
                self.global_dim
            ));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        for (i, s) in self.sa_stages.iter().enumerate() {
            if s.sample_divisor == 0
                || s.group_size == 0
                || !(s.radius > 0.0)
                || s.mlp.is_empty()
                || s.mlp.contains(&0)
            {
                return bad(format!("set-abstraction stage {i} is malformed"));
            }
        }
        let sizes = self.stage_sizes();
        if sizes.windows(2).any(|w| w[1] > w[0]) || sizes.first().is_some_and(|&k| k > self.points)
        {
            return bad("set-abstraction stages must not grow the point count".into());
        }
        let hidden = [
            &self.translation_hidden,
            &self.skeleton_hidden,
            &self.pose_hidden,
            &self.param_hidden,
        ];
        if hidden.iter().any(|h| h.contains(&0)) {
            return bad("hidden widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.box_extent.iter().any(|&e| !(e > 0.0)) {
            return bad("box extent must be positive".into());
        }
        let s = &self.scales;
        if [
            s.pred, s.joint, s.theta, s.beta, s.gamma, s.joints, s.vertices,
        ]
        .iter()
        .any(|&v| !(v >= 0.0 && v.is_finite()))
        {
            return bad("loss scale factors must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = NetConfig::default();
        c.validate().unwrap();
        assert_eq!(c.stage_sizes(), vec![256, 64]);
        assert_eq!(c.global_dim / c.heads, 128);
        NetConfig::micro().validate().unwrap();
    }

    #[test]
    fn heads_must_divide_width() {
        let c = NetConfig {
            heads: 7,
            ..NetConfig::default()
        };
        assert!(matches!(c.validate(), Err(NetError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<NetConfig>(r#"{"window": 4, "typo": 1}"#).is_err());
        let c: NetConfig = serde_json::from_str(r#"{"window": 4}"#).unwrap();
        assert_eq!(c.window, 4);
        assert_eq!(c.points, 1024);
    }
}
