use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::dataset::{GroundTruth, RawSequence};
use super::motion::{frame_count, MotionConfig, MotionKind, MotionModel};
use super::render::{render_frame, NoiseConfig, CHANNELS};
use super::RadarError;
use crate::autodiff::mix_seed;
use crate::body::{forward_kinematics, BodyTemplate, TemplateSpec};

/// Everything needed to regenerate one simulated sequence. Written next to
/// each dataset file as a JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub kind: MotionKind,
    pub seconds: f64,
    pub seed: u64,
    pub motion: MotionConfig,
    pub noise: NoiseConfig,
    pub template: TemplateSpec,
    pub radar_origin: [f64; 3],
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            kind: MotionKind::WalkLine,
            seconds: 10.0,
            seed: 0,
            motion: MotionConfig::default(),
            noise: NoiseConfig::default(),
            template: TemplateSpec::default(),
            radar_origin: [0.0; 3],
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), RadarError> {
        self.motion.validate()?;
        self.noise.validate()?;
        frame_count(self.seconds, self.motion.frame_rate)?;
        Ok(())
    }
}

/// Animates the template and renders every frame. Frame `k` is rendered at
/// `k / frame_rate` with its velocity taken against the pose one frame
/// period earlier.
pub fn simulate_sequence(
    config: &SimulationConfig,
    template: &BodyTemplate,
) -> Result<RawSequence, RadarError> {
    config.validate()?;
    let fr = config.motion.frame_rate;
    let n = frame_count(config.seconds, fr)?;
    let dt = 1.0 / fr;
    let model = MotionModel::new(
        template,
        config.kind,
        config.seconds,
        &config.motion,
        mix_seed(&[config.seed, 0]),
    )?;
    let times: Vec<f64> = (0..n).map(|k| k as f64 / fr).collect();
    let params = model.params_at(&times);
    let origin = Vector3::from(config.radar_origin);
    let mut frames = Vec::with_capacity(n);
    for (k, &t) in times.iter().enumerate() {
        let now = params.slice_frames(k, 1);
        let prev = model.params_at(&[t - dt]);
        let seed = mix_seed(&[config.seed, 1, k as u64]);
        frames.push(render_frame(
            template,
            &now,
            &prev,
            dt,
            t,
            &origin,
            &config.noise,
            seed,
        )?);
    }
    let joints = forward_kinematics(template, &params)?.joints;
    let initial_box_center = Some([params.gamma[0], params.gamma[1], params.gamma[2]]);
    let seq = RawSequence {
        channels: CHANNELS,
        frame_rate: fr,
        frames,
        ground_truth: Some(GroundTruth { params, joints }),
        initial_box_center,
    };
    seq.validate()?;
    Ok(seq)
}

/// `<dataset>.json` next to `<dataset>`.
pub fn sidecar_path(dataset: &Path) -> PathBuf {
    let mut name = dataset
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".json");
    dataset.with_file_name(name)
}

pub fn write_sidecar(dataset: &Path, config: &SimulationConfig) -> Result<PathBuf, RadarError> {
    let path = sidecar_path(dataset);
    std::fs::write(&path, serde_json::to_string_pretty(config)? + "\n")?;
    Ok(path)
}

pub fn read_sidecar(dataset: &Path) -> Result<SimulationConfig, RadarError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(
        sidecar_path(dataset),
    )?)?)
}
