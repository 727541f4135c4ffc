use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmbat::body::body_forward;
use mmbat::harness::TrainConfig;
use mmbat::net::NetConfig;
use mmbat::radar::{read_dataset, read_sidecar, write_dataset, SimulationConfig};

fn mmbat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmbat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A run configuration with the small body and network.
fn micro_config(dir: &Path) -> PathBuf {
    let net = NetConfig::micro();
    let config = serde_json::json!({
        "simulation": SimulationConfig { seconds: 1.2, template: net.template.clone(), ..SimulationConfig::default() },
        "train": TrainConfig { epochs: 1, batch_size: 4, net, ..TrainConfig::default() },
    });
    let path = dir.join("micro.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn simulate_micro(dir: &Path, seed: &str) -> PathBuf {
    let cfg = micro_config(dir);
    let data = dir.join("data");
    let o = mmbat(&[
        "simulate",
        "--config",
        p(&cfg),
        "--seed",
        seed,
        "--sequences",
        "2",
        "--out",
        p(&data),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    data
}

#[test]
fn simulate_is_deterministic_and_reports_points() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = mmbat(&[
            "simulate",
            "--kind",
            "walk_line",
            "--seconds",
            "1",
            "--seed",
            "7",
            "--out",
            p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.contains("walk_line_7.mmrd: 10 frames"), "{text}");
    }
    for name in ["walk_line_7.mmrd", "walk_line_7.mmrd.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(read_sidecar(&a.join("walk_line_7.mmrd")).unwrap().seed, 7);
    assert!(a.join("simulate.config.json").is_file());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = mmbat(&[
        "simulate",
        "--kind",
        "squat",
        "--frames",
        "5",
        "--seed",
        "3",
        "--clutter",
        "2",
        "--out",
        p(&first),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let second = dir.path().join("second");
    let o = mmbat(&[
        "simulate",
        "--config",
        p(&first.join("simulate.config.json")),
        "--out",
        p(&second),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.join("squat_3.mmrd")).unwrap(),
        std::fs::read(second.join("squat_3.mmrd")).unwrap()
    );
}

#[test]
fn noise_off_puts_every_point_on_the_body() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmbat(&[
        "simulate",
        "--seconds",
        "0.5",
        "--clutter",
        "0",
        "--ghosts",
        "0",
        "--jitter",
        "0",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let path = dir.path().join("walk_line_0.mmrd");
    let seq = read_dataset(&path).unwrap();
    let template = read_sidecar(&path).unwrap().template.build().unwrap();
    let gt = seq.ground_truth.as_ref().unwrap();
    let vertices = body_forward(&template, &gt.params).unwrap().vertices;
    let nv = template.n_vertices;
    let mut seen = 0;
    for (t, frame) in seq.frames.iter().enumerate() {
        let frame_vertices = &vertices[t * nv * 3..(t + 1) * nv * 3];
        for q in frame.points() {
            seen += 1;
            let on_body = frame_vertices
                .chunks_exact(3)
                .any(|v| (0..3).all(|k| (v[k] - q[k]).abs() < 1e-9));
            assert!(on_body, "frame {t}: {q:?}");
        }
    }
    assert!(seen > 0);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&mmbat(&[
            "simulate",
            "--frames",
            "0",
            "--out",
            p(dir.path())
        ])),
        2
    );
    assert_eq!(code(&mmbat(&["simulate", "--kind", "moonwalk"])), 2);
    assert_eq!(code(&mmbat(&["frobnicate"])), 2);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"train": {"epochs": 1, "epoch": 2}}"#).unwrap();
    let o = mmbat(&["train", "--config", p(&bad), "--data", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));

    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, r#"{"train": {"batch_size": 0}}"#).unwrap();
    assert_eq!(
        code(&mmbat(&[
            "train",
            "--config",
            p(&invalid),
            "--data",
            p(dir.path())
        ])),
        2
    );
}

#[test]
fn missing_checkpoint_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["eval", "--data", p(dir.path())],
        vec![
            "eval",
            "--checkpoint",
            "/nonexistent/x.mmbt",
            "--data",
            p(dir.path()),
        ],
    ] {
        let o = mmbat(&args);
        assert_eq!(code(&o), 2);
        assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    }
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_micro(dir.path(), "4");
    let cfg = micro_config(dir.path());
    let run = |out: &str, extra: &[&str]| {
        let out = dir.path().join(out);
        let mut args = vec![
            "train",
            "--config",
            p(&cfg),
            "--data",
            p(&data),
            "--out",
            p(&out),
        ];
        args.extend_from_slice(extra);
        let o = mmbat(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    for name in ["checkpoint.mmbt", "loss.csv", "train.config.json"] {
        assert!(a.join(name).is_file(), "{name}");
    }
    let csv = std::fs::read_to_string(a.join("loss.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("loss.csv")).unwrap());
    assert!(csv.lines().count() > 1);

    let zero = run("zero", &["--epochs", "0"]);
    assert_eq!(
        std::fs::read_to_string(zero.join("loss.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );

    let ck = a.join("checkpoint.mmbt");
    let eval_out = dir.path().join("eval");
    let o = mmbat(&[
        "eval",
        "--checkpoint",
        p(&ck),
        "--data",
        p(&data),
        "--dump-frames",
        "--out",
        p(&eval_out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(report["crop"], "tracked");
    assert_eq!(report["per_sequence"].as_array().unwrap().len(), 2);
    let frames = report["frames"].as_u64().unwrap() as usize;
    let dump = std::fs::read_to_string(eval_out.join("frames.jsonl")).unwrap();
    assert_eq!(dump.lines().count(), frames);
    let line: serde_json::Value = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
    assert!(line["joints"].is_array() && line["vertices"].is_array());
    assert!(eval_out.join("eval.config.json").is_file());

    let oracle_out = dir.path().join("oracle");
    let o = mmbat(&[
        "eval",
        "--checkpoint",
        p(&ck),
        "--data",
        p(&data),
        "--oracle-crop",
        "--out",
        p(&oracle_out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(oracle_out.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(report["crop"], "ground_truth");

    // the run config asks for a different learning rate than the checkpoint was trained with
    let other = dir.path().join("other");
    let o = mmbat(&[
        "eval",
        "--config",
        p(&cfg),
        "--checkpoint",
        p(&ck),
        "--data",
        p(&data),
        "--out",
        p(&other),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut changed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    changed["train"]["learning_rate"] = serde_json::json!(0.5);
    let changed_path = dir.path().join("changed.json");
    std::fs::write(&changed_path, changed.to_string()).unwrap();
    let o = mmbat(&[
        "eval",
        "--config",
        p(&changed_path),
        "--checkpoint",
        p(&ck),
        "--data",
        p(&data),
        "--out",
        p(&other),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("fingerprint"), "{}", stderr(&o));
    let o = mmbat(&[
        "eval",
        "--config",
        p(&changed_path),
        "--checkpoint",
        p(&ck),
        "--data",
        p(&data),
        "--force",
        "--out",
        p(&other),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn training_without_ground_truth_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_micro(dir.path(), "1");
    let victim = data.join("walk_line_2.mmrd");
    let mut seq = read_dataset(&victim).unwrap();
    seq.ground_truth = None;
    write_dataset(&seq, &victim).unwrap();
    let cfg = micro_config(dir.path());
    let o = mmbat(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("run")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("walk_line_2.mmrd"), "{}", stderr(&o));
}

#[test]
fn inspect_reports() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.mmrd");
    std::fs::write(&empty, b"").unwrap();
    let o = mmbat(&["inspect", p(&empty)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("frames: 0"));

    let corrupt = dir.path().join("corrupt.mmrd");
    std::fs::write(&corrupt, b"MMRDxx").unwrap();
    assert_eq!(code(&mmbat(&["inspect", p(&corrupt)])), 1);

    let o = mmbat(&[
        "simulate",
        "--seconds",
        "0.5",
        "--clutter",
        "0",
        "--ghosts",
        "0",
        "--jitter",
        "0",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    let o = mmbat(&["inspect", p(&dir.path().join("walk_line_0.mmrd")), "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["frames"], 5);
    assert_eq!(report["in_box_fraction"], 1.0);
}
