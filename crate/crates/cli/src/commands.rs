use std::io::Write as _;
use std::path::{Path, PathBuf};

use mmbat::harness::{
    evaluate, fingerprint, load_checkpoint, loss_csv, save_checkpoint, train, EvalOptions,
    LabeledSequence, NetEstimator,
};
use mmbat::radar::{
    inspect, read_dataset, simulate_sequence, write_dataset, write_sidecar, RawSequence, CHANNELS,
};

use crate::run_config::RunConfig;
use crate::{Cli, CliError, Command, EvalArgs, InspectArgs, SimulateArgs, TrainArgs};

pub const DATASET_EXTENSION: &str = "mmrd";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut run = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        run.seed = cli.seed;
    }
    if cli.out.is_some() {
        run.out = cli.out;
    }
    match cli.command {
        Command::Simulate(a) => simulate(run, a),
        Command::Train(a) => train_cmd(run, a),
        Command::Eval(a) => eval(run, a),
        Command::Inspect(a) => inspect_cmd(run, a),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn output_dir(run: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = run.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn simulate(mut run: RunConfig, a: SimulateArgs) -> Result<(), CliError> {
    let sim = &mut run.simulation;
    if let Some(k) = a.kind {
        sim.kind = k;
    }
    if let Some(s) = a.seconds {
        sim.seconds = s;
    }
    if let Some(f) = a.frames {
        sim.seconds = f as f64 / sim.motion.frame_rate;
    }
    if let Some(c) = a.clutter {
        sim.noise.clutter_points_per_frame = c;
    }
    if let Some(g) = a.ghosts {
        sim.noise.ghost_probability = g;
    }
    if let Some(j) = a.jitter {
        sim.noise.position_jitter_sigma = j;
    }
    if let Some(n) = a.sequences {
        run.sequences = n as usize;
    }
    run.apply_seed();
    if run.sequences == 0 {
        return Err(CliError::Usage("sequences must be at least 1".into()));
    }
    run.simulation.validate()?;
    let template = run
        .simulation
        .template
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = output_dir(&run)?;
    let mut stdout = std::io::stdout().lock();
    for i in 0..run.sequences {
        let mut cfg = run.simulation.clone();
        cfg.seed = cfg.seed.wrapping_add(i as u64);
        let seq = simulate_sequence(&cfg, &template)?;
        let path = dir.join(format!(
            "{}_{}.{DATASET_EXTENSION}",
            cfg.kind.as_str(),
            cfg.seed
        ));
        write_dataset(&seq, &path)?;
        write_sidecar(&path, &cfg)?;
        let counts: Vec<usize> = seq.frames.iter().map(|f| f.count()).collect();
        let total: usize = counts.iter().sum();
        let _ = writeln!(
            stdout,
            "{}: {} frames, {} points, {:.1} per frame (min {}, max {})",
            path.display(),
            counts.len(),
            total,
            total as f64 / counts.len() as f64,
            counts.iter().min().unwrap_or(&0),
            counts.iter().max().unwrap_or(&0),
        );
    }
    run.write(&dir, "simulate")?;
    Ok(())
}

/// Dataset files named by `paths`; directories contribute their `.mmrd`
/// files in name order.
fn dataset_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| io_error(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == DATASET_EXTENSION))
                .collect();
            inside.sort();
            files.extend(inside);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn load_data(run: &RunConfig, command: &'static str) -> Result<Vec<LabeledSequence>, CliError> {
    if run.data.is_empty() {
        return Err(CliError::UsageOf(
            command,
            "no dataset given (--data)".into(),
        ));
    }
    let files = dataset_files(&run.data)?;
    if files.is_empty() {
        return Err(CliError::Runtime("no dataset files found".into()));
    }
    files
        .into_iter()
        .map(|f| {
            let sequence = read_dataset(&f).map_err(|e| io_error(&f, e))?;
            Ok(LabeledSequence {
                name: f.display().to_string(),
                sequence,
            })
        })
        .collect()
}

fn train_cmd(mut run: RunConfig, a: TrainArgs) -> Result<(), CliError> {
    let cfg = run.train.get_or_insert_with(Default::default);
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b as usize;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    if a.max_steps.is_some() {
        cfg.max_steps = a.max_steps;
    }
    if !a.data.is_empty() {
        run.data = a.data;
    }
    run.apply_seed();
    let config = run.train.clone().expect("set above");
    config.validate()?;
    let data = load_data(&run, "train")?;
    let dir = output_dir(&run)?;
    let out = train(&config, &data)?;
    let ck_path = dir.join("checkpoint.mmbt");
    save_checkpoint(&ck_path, &out.checkpoint)?;
    let csv_path = dir.join("loss.csv");
    std::fs::write(&csv_path, loss_csv(&out.log)).map_err(|e| io_error(&csv_path, e))?;
    run.write(&dir, "train")?;
    match out.log.last() {
        Some(r) => println!(
            "{} steps, final l_total {:.6}; wrote {}",
            r.step,
            r.losses.l_total,
            ck_path.display()
        ),
        None => println!(
            "no training steps; wrote the initial weights to {}",
            ck_path.display()
        ),
    }
    Ok(())
}

fn eval(mut run: RunConfig, a: EvalArgs) -> Result<(), CliError> {
    if a.checkpoint.is_some() {
        run.checkpoint = a.checkpoint;
    }
    if !a.data.is_empty() {
        run.data = a.data;
    }
    run.eval.oracle_crop |= a.oracle_crop;
    run.eval.dump_frames |= a.dump_frames;
    run.eval.force |= a.force;
    run.apply_seed();
    let Some(ck_path) = run.checkpoint.clone() else {
        return Err(CliError::UsageOf(
            "eval",
            "no checkpoint given (--checkpoint)".into(),
        ));
    };
    if !ck_path.is_file() {
        return Err(CliError::UsageOf(
            "eval",
            format!("checkpoint {} does not exist", ck_path.display()),
        ));
    }
    let checkpoint = load_checkpoint(&ck_path).map_err(|e| io_error(&ck_path, e))?;
    let stored = checkpoint.fingerprint()?;
    if let Some(requested) = &run.train {
        let wanted = fingerprint(requested)?;
        if wanted != stored {
            if !run.eval.force {
                return Err(CliError::Usage(format!(
                    "configuration fingerprint {wanted} differs from the checkpoint's {stored}; pass --force to evaluate with the checkpoint's configuration"
                )));
            }
            log::warn!("configuration differs from the checkpoint; using the checkpoint's");
        }
    }
    let data = load_data(&run, "eval")?;
    let dir = output_dir(&run)?;
    let (model, store) = checkpoint.build_model()?;
    let est = NetEstimator {
        model: &model,
        store: &store,
    };
    let opts = EvalOptions {
        oracle_crop: run.eval.oracle_crop,
        seed: run.eval.crop_seed,
        keep_frames: run.eval.dump_frames,
    };
    let out = evaluate(&est, &data, &opts, &stored)?;
    let metrics_path = dir.join("metrics.json");
    let json =
        serde_json::to_string_pretty(&out.report).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&metrics_path, json + "\n").map_err(|e| io_error(&metrics_path, e))?;
    if run.eval.dump_frames {
        let path = dir.join("frames.jsonl");
        let mut text = String::new();
        for f in &out.frames {
            text.push_str(&serde_json::to_string(f).map_err(|e| CliError::Runtime(e.to_string()))?);
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    }
    run.write(&dir, "eval")?;
    let r = &out.report;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
    println!(
        "{} frames ({} crop): MPJRE {:.2} deg, MPJPE {:.2} cm, MPVPE {} cm, MTE {:.2} cm, MPTE {} cm",
        r.frames,
        r.crop,
        r.mpjre,
        r.mpjpe,
        opt(r.mpvpe),
        r.mte,
        opt(r.mpte)
    );
    Ok(())
}

fn inspect_cmd(run: RunConfig, a: InspectArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&a.path).map_err(|e| io_error(&a.path, e))?;
    let seq = if bytes.is_empty() {
        RawSequence {
            channels: CHANNELS,
            frame_rate: 0.0,
            frames: Vec::new(),
            ground_truth: None,
            initial_box_center: None,
        }
    } else {
        mmbat::radar::decode(&bytes).map_err(|e| io_error(&a.path, e))?
    };
    let box_extent = run.train.as_ref().map_or_else(
        || mmbat::net::NetConfig::default().box_extent,
        |t| t.net.box_extent,
    );
    let report = inspect(&seq, box_extent);
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?
        );
    } else {
        print!("{}", report.to_text());
    }
    if run.out.is_some() {
        let dir = output_dir(&run)?;
        run.write(&dir, "inspect")?;
    }
    Ok(())
}
