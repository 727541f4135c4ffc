//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use mmbat::body::TemplateSpec;
use mmbat::harness::{LabeledSequence, TrainConfig};
use mmbat::net::{LossScales, NetConfig, SaStage};
use mmbat::radar::{simulate_sequence, MotionKind, NoiseConfig, SimulationConfig};

/// Simulated sequences with ground truth, one seed each.
pub fn simulated(
    kind: MotionKind,
    seconds: f64,
    template: &TemplateSpec,
    seeds: &[u64],
    noise: NoiseConfig,
) -> Vec<LabeledSequence> {
    let body = template.build().expect("template");
    seeds
        .iter()
        .map(|&seed| {
            let cfg = SimulationConfig {
                kind,
                seconds,
                seed,
                noise: noise.clone(),
                template: template.clone(),
                ..SimulationConfig::default()
            };
            LabeledSequence {
                name: format!("{}_{seed}", kind.as_str()),
                sequence: simulate_sequence(&cfg, &body).expect("simulation"),
            }
        })
        .collect()
}

/// Full 24-joint topology with a small mesh.
pub fn overfit_template() -> TemplateSpec {
    TemplateSpec {
        n_joints: 24,
        n_vertices: 96,
        n_shape: 10,
        seed: 0,
    }
}

/// Reduced-width network for the desk-scale overfit experiment.
pub fn overfit_config() -> TrainConfig {
    TrainConfig {
        epochs: 1000,
        max_steps: Some(500),
        batch_size: 8,
        learning_rate: 5e-3,
        window_stride: Some(1),
        seed: 11,
        crop_jitter: 0.1,
        static_crop_probability: 0.5,
        net: NetConfig {
            window: 8,
            points: 128,
            template: overfit_template(),
            sa_stages: vec![
                SaStage {
                    sample_divisor: 4,
                    radius: 0.2,
                    group_size: 16,
                    mlp: vec![16, 32],
                },
                SaStage {
                    sample_divisor: 16,
                    radius: 0.4,
                    group_size: 16,
                    mlp: vec![32, 64],
                },
            ],
            feature_dim: 64,
            global_dim: 64,
            heads: 4,
            translation_hidden: vec![64, 32],
            skeleton_hidden: vec![64],
            pose_hidden: vec![32],
            param_hidden: vec![32],
            dropout: 0.0,
            // ten shape coefficients: bring the shape term in line with the others
            scales: LossScales {
                beta: 0.1,
                ..LossScales::default()
            },
            ..NetConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// Four walking sequences of 64 frames.
pub fn overfit_dataset() -> Vec<LabeledSequence> {
    simulated(
        MotionKind::WalkLine,
        6.4,
        &overfit_template(),
        &[1, 2, 3, 4],
        NoiseConfig::default(),
    )
}
