mod common;

use mmbat::body::TemplateSpec;
use mmbat::harness::*;
use mmbat::net::NetConfig;
use mmbat::radar::{MotionKind, NoiseConfig};

fn micro_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 3,
        learning_rate: 1e-2,
        validation_fraction: 0.3,
        seed: 5,
        net: NetConfig::micro(),
        ..TrainConfig::default()
    }
}

fn micro_data(seeds: &[u64]) -> Vec<LabeledSequence> {
    let template = NetConfig::micro().template;
    common::simulated(
        MotionKind::WalkLine,
        1.2,
        &template,
        seeds,
        NoiseConfig::default(),
    )
}

#[test]
fn zero_epochs_keeps_the_initial_weights() {
    let data = micro_data(&[1, 2]);
    let config = TrainConfig {
        epochs: 0,
        ..micro_config()
    };
    let out = train(&config, &data).unwrap();
    assert!(out.log.is_empty());
    let (_, init) = Checkpoint::capture(&config, 0, 0, &out.store, None)
        .unwrap()
        .build_model()
        .unwrap();
    let mut fresh = mmbat::autodiff::ParamStore::new();
    mmbat::net::MmBat::new(&config.net, &mut fresh).unwrap();
    assert!(init
        .iter()
        .zip(fresh.iter())
        .all(|(a, b)| a.1.values() == b.1.values()));
    assert_eq!(
        (out.checkpoint.meta.epoch, out.checkpoint.meta.step),
        (0, 0)
    );
}

#[test]
fn training_is_deterministic() {
    let data = micro_data(&[1, 2, 3]);
    let a = train(&micro_config(), &data).unwrap();
    let b = train(&micro_config(), &data).unwrap();
    assert!(!a.log.is_empty());
    assert_eq!(loss_csv(&a.log), loss_csv(&b.log));
    assert_eq!(
        a.checkpoint.to_bytes().unwrap(),
        b.checkpoint.to_bytes().unwrap()
    );
    let fp = a.checkpoint.fingerprint().unwrap();
    let report = |o: &TrainOutcome| {
        let est = NetEstimator {
            model: &o.model,
            store: &o.store,
        };
        serde_json::to_string(
            &evaluate(&est, &data, &EvalOptions::default(), &fp)
                .unwrap()
                .report,
        )
        .unwrap()
    };
    assert_eq!(report(&a), report(&b));
}

#[test]
fn loss_csv_header_and_rows() {
    let data = micro_data(&[1, 2]);
    let out = train(
        &TrainConfig {
            epochs: 1,
            ..micro_config()
        },
        &data,
    )
    .unwrap();
    let csv = loss_csv(&out.log);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,l_pred,l_joint,l_theta,l_beta,l_gamma,l_J,l_M,l_total"
    );
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), out.log.len());
    assert!(rows[0].starts_with("1,"));
}

#[test]
fn resume_matches_the_uninterrupted_run() {
    let data = micro_data(&[1, 2, 3]);
    let config = TrainConfig {
        epochs: 3,
        ..micro_config()
    };
    let full = train(&config, &data).unwrap();

    let mut first = Trainer::new(&config, &data).unwrap();
    first.run_epoch().unwrap();
    let bytes = first.checkpoint().unwrap().to_bytes().unwrap();
    let head = first.log().to_vec();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    let mut second = Trainer::resume(&ck, &data).unwrap();
    second.run().unwrap();
    let tail = second.log().to_vec();
    let resumed = second.finish().unwrap();

    let joined: Vec<_> = head.into_iter().chain(tail).collect();
    assert_eq!(loss_csv(&joined), loss_csv(&full.log));
    assert_eq!(
        resumed.checkpoint.to_bytes().unwrap(),
        full.checkpoint.to_bytes().unwrap()
    );
}

#[test]
fn max_steps_stops_mid_epoch() {
    let data = micro_data(&[1, 2, 3]);
    let out = train(
        &TrainConfig {
            epochs: 50,
            max_steps: Some(3),
            ..micro_config()
        },
        &data,
    )
    .unwrap();
    assert_eq!(out.log.len(), 3);
    assert_eq!(out.checkpoint.meta.step, 3);
}

#[test]
fn short_sequences_are_skipped() {
    let mut data = micro_data(&[1, 2]);
    data[1].sequence.frames.truncate(3);
    let gt = data[1].sequence.ground_truth.as_mut().unwrap();
    gt.params = gt.params.slice_frames(0, 3);
    gt.joints.truncate(3 * gt.params.n_joints * 3);
    let config = TrainConfig {
        validation_fraction: 0.1,
        ..micro_config()
    };
    let trainer = Trainer::new(&config, &data).unwrap();
    let t = config.net.window;
    assert_eq!(
        trainer.train_windows(),
        (data[0].sequence.len() - 2 * t) / config.stride() + 1
    );

    let only_short = vec![data[1].clone()];
    assert!(matches!(
        Trainer::new(&config, &only_short),
        Err(HarnessError::Contract(_))
    ));
}

#[test]
fn training_needs_ground_truth() {
    let mut data = micro_data(&[1]);
    data[0].sequence.ground_truth = None;
    assert!(matches!(
        Trainer::new(&micro_config(), &data),
        Err(HarnessError::Contract(_))
    ));
}

fn passthrough() -> GroundTruthEstimator {
    let net = NetConfig::micro();
    GroundTruthEstimator {
        template: net.template.build().unwrap(),
        window: net.window,
        points: net.points,
        box_extent: net.box_extent,
    }
}

#[test]
fn ground_truth_passthrough_scores_zero() {
    let data = micro_data(&[1, 2]);
    let est = passthrough();
    for oracle_crop in [false, true] {
        let r = evaluate(
            &est,
            &data,
            &EvalOptions {
                oracle_crop,
                ..EvalOptions::default()
            },
            "fp",
        )
        .unwrap()
        .report;
        assert!(r.mpjre < 0.06, "{}", r.mpjre);
        assert_eq!(r.mpjpe, 0.0);
        assert_eq!(r.mpvpe, Some(0.0));
        assert_eq!(r.mte, 0.0);
        assert_eq!(r.mpte, Some(0.0));
        assert_eq!(
            r.frames,
            data.iter().map(|d| d.sequence.len()).sum::<usize>()
        );
        assert_eq!(r.config_fingerprint, "fp");
    }
}

#[test]
fn frame_dump_covers_every_frame() {
    let data = micro_data(&[1]);
    let est = passthrough();
    let out = evaluate(
        &est,
        &data,
        &EvalOptions {
            keep_frames: true,
            ..EvalOptions::default()
        },
        "fp",
    )
    .unwrap();
    assert_eq!(out.frames.len(), data[0].sequence.len());
    assert_eq!(
        out.frames[0].crop_center,
        data[0].sequence.initial_box_center.unwrap()
    );
    assert!(out.frames[0].gamma_p.is_none());
    assert!(out.frames.last().unwrap().gamma_p.is_some());
}

#[test]
fn tracked_evaluation_needs_an_initial_box() {
    let mut data = micro_data(&[1]);
    data[0].sequence.initial_box_center = None;
    let est = passthrough();
    assert!(matches!(
        evaluate(&est, &data, &EvalOptions::default(), "fp"),
        Err(HarnessError::Contract(_))
    ));
    evaluate(
        &est,
        &data,
        &EvalOptions {
            oracle_crop: true,
            ..EvalOptions::default()
        },
        "fp",
    )
    .unwrap();
}

#[test]
fn resetting_the_translation_head_restores_its_initial_weights() {
    let data = micro_data(&[1, 2, 3]);
    let config = micro_config();
    let out = train(&config, &data).unwrap();
    let mut fresh = mmbat::autodiff::ParamStore::new();
    mmbat::net::MmBat::new(&config.net, &mut fresh).unwrap();
    let mut frozen = out.store.clone();
    reset_translation_head(&out.model, &mut frozen).unwrap();
    let head = out.model.translation_params();
    for id in frozen.ids() {
        let value = frozen.get(id).values();
        if head.contains(&id) {
            assert_eq!(value, fresh.get(id).values());
        } else {
            assert_eq!(value, out.store.get(id).values());
        }
    }
    let est = NetEstimator {
        model: &out.model,
        store: &frozen,
    };
    assert!(evaluate(&est, &data, &EvalOptions::default(), "fp")
        .unwrap()
        .report
        .mpte
        .unwrap()
        .is_finite());
}

#[test]
fn checkpoint_of_a_different_body_is_rejected() {
    let data = micro_data(&[1]);
    let out = train(
        &TrainConfig {
            epochs: 0,
            ..micro_config()
        },
        &data,
    )
    .unwrap();
    let bigger = NetConfig {
        template: TemplateSpec {
            n_joints: 6,
            ..NetConfig::micro().template
        },
        ..NetConfig::micro()
    };
    match out.checkpoint.build_model_with(&bigger) {
        Err(HarnessError::Format(m)) => assert!(m.contains("pose head"), "{m}"),
        other => panic!("{:?}", other.err()),
    }
}
