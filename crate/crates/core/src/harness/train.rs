use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::HarnessError;
use crate::autodiff::{mix_seed, AdamState, Graph, ParamStore};
use crate::body::body_forward;
use crate::net::{
    compute_losses, crop_window, CropSource, Ctx, LossReport, LossTargets, MmBat, ProcessedSequence,
};
use crate::radar::{GroundTruth, RawSequence};

// Stream tags keep the seeded random streams apart.
const SPLIT: u64 = 1;
const SHUFFLE: u64 = 2;
const JITTER: u64 = 3;
const CROP: u64 = 4;
const VALIDATION_CROP: u64 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub name: String,
    pub sequence: RawSequence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based optimizer step.
    pub step: u64,
    pub epoch: usize,
    pub losses: LossReport,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
    /// Mean validation losses after each epoch, when sequences were held out.
    pub validation: Vec<(usize, LossReport)>,
    pub model: MmBat,
    pub store: ParamStore,
}

/// A training window: sequence index and first frame. The window itself
/// covers `T` frames and the following `T` frames supply the translation
/// target.
type Window = (usize, usize);

pub struct Trainer<'d> {
    config: TrainConfig,
    model: MmBat,
    store: ParamStore,
    adam: AdamState,
    data: &'d [LabeledSequence],
    vertices: Vec<Vec<f64>>,
    train_windows: Vec<Window>,
    val_windows: Vec<Window>,
    epoch: usize,
    step: u64,
    stopped: bool,
    log: Vec<StepRecord>,
    validation: Vec<(usize, LossReport)>,
}

fn ground_truth(s: &LabeledSequence) -> Result<&GroundTruth, HarnessError> {
    s.sequence.ground_truth.as_ref().ok_or_else(|| {
        HarnessError::Contract(format!("sequence {} carries no ground truth", s.name))
    })
}

impl<'d> Trainer<'d> {
    pub fn new(config: &TrainConfig, data: &'d [LabeledSequence]) -> Result<Self, HarnessError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let model = MmBat::new(&config.net, &mut store)?;
        let adam = AdamState::new(config.adam(), &store);
        Self::assemble(config, model, store, adam, data, 0, 0)
    }

    /// Continues the run stored in `checkpoint` on the same dataset.
    pub fn resume(
        checkpoint: &Checkpoint,
        data: &'d [LabeledSequence],
    ) -> Result<Self, HarnessError> {
        let config = &checkpoint.meta.config;
        config.validate()?;
        let mut store = ParamStore::new();
        let model = MmBat::new(&config.net, &mut store)?;
        let adam = checkpoint.restore_optimizer(&mut store)?;
        Self::assemble(
            config,
            model,
            store,
            adam,
            data,
            checkpoint.meta.epoch,
            checkpoint.meta.step,
        )
    }

    fn assemble(
        config: &TrainConfig,
        model: MmBat,
        store: ParamStore,
        adam: AdamState,
        data: &'d [LabeledSequence],
        epoch: usize,
        step: u64,
    ) -> Result<Self, HarnessError> {
        let t = config.net.window;
        let mut vertices = Vec::with_capacity(data.len());
        for s in data {
            s.sequence.validate()?;
            let gt = ground_truth(s)?;
            if s.sequence.channels != config.net.channels {
                return Err(HarnessError::Contract(format!(
                    "sequence {} has {} channels, the network expects {}",
                    s.name, s.sequence.channels, config.net.channels
                )));
            }
            vertices.push(body_forward(&model.template, &gt.params)?.vertices);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[
            config.seed,
            SPLIT,
        ])));
        let n_val = (data.len() as f64 * config.validation_fraction).floor() as usize;
        let mut is_val = vec![false; data.len()];
        for &i in &order[..n_val] {
            is_val[i] = true;
        }
        let (mut train_windows, mut val_windows) = (Vec::new(), Vec::new());
        for (i, s) in data.iter().enumerate() {
            if s.sequence.len() < 2 * t {
                log::warn!(
                    "skipping {}: {} frames, need {} for a window and its successor",
                    s.name,
                    s.sequence.len(),
                    2 * t
                );
                continue;
            }
            let starts = (0..=s.sequence.len() - 2 * t).step_by(config.stride());
            let target = if is_val[i] {
                &mut val_windows
            } else {
                &mut train_windows
            };
            target.extend(starts.map(|start| (i, start)));
        }
        if train_windows.is_empty() {
            return Err(HarnessError::Contract("no usable training windows".into()));
        }
        Ok(Self {
            config: config.clone(),
            model,
            store,
            adam,
            data,
            vertices,
            train_windows,
            val_windows,
            epoch,
            step,
            stopped: false,
            log: Vec::new(),
            validation: Vec::new(),
        })
    }

    pub fn model(&self) -> &MmBat {
        &self.model
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn log(&self) -> &[StepRecord] {
        &self.log
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn train_windows(&self) -> usize {
        self.train_windows.len()
    }

    pub fn validation_windows(&self) -> usize {
        self.val_windows.len()
    }

    pub fn is_finished(&self) -> bool {
        self.stopped || self.epoch >= self.config.epochs
    }

    fn out_of_steps(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.step >= m)
    }

    fn crop(
        &self,
        (si, start): Window,
        seed: u64,
        jitter: Option<u64>,
    ) -> Result<ProcessedSequence, HarnessError> {
        let seq = &self.data[si].sequence;
        let gt = ground_truth(&self.data[si])?;
        let mut offset = [0.0; 3];
        let mut fixed = false;
        if let Some(js) = jitter {
            let mut rng = ChaCha8Rng::seed_from_u64(js);
            if self.config.crop_jitter > 0.0 {
                let normal = Normal::new(0.0, self.config.crop_jitter).expect("validated jitter");
                offset = std::array::from_fn(|_| normal.sample(&mut rng));
            }
            fixed = rng.random_bool(self.config.static_crop_probability);
        }
        let t = self.config.net.window;
        let centers: Vec<[f64; 3]> = (start..start + t)
            .map(|f| {
                // a static crop mimics the first evaluation window, which only has the initial box
                let r = gt.root(if fixed { start } else { f });
                [r[0] + offset[0], r[1] + offset[1], r[2] + offset[2]]
            })
            .collect();
        Ok(crop_window(
            seq,
            start,
            &centers,
            self.config.net.points,
            self.config.net.box_extent,
            seed,
            CropSource::GroundTruth,
        )?)
    }

    fn targets(&self, windows: &[Window]) -> Result<LossTargets, HarnessError> {
        let t = self.config.net.window;
        let mut tg = LossTargets {
            gamma_next: Some(Vec::new()),
            joints: Some(Vec::new()),
            theta: Some(Vec::new()),
            beta: Some(Vec::new()),
            gamma: Some(Vec::new()),
            vertices: Some(Vec::new()),
        };
        for &(si, start) in windows {
            let gt = ground_truth(&self.data[si])?;
            let p = &gt.params;
            let (nj, ns) = (p.n_joints, p.n_shape);
            let nv = self.model.template.n_vertices;
            let push = |v: &mut Option<Vec<f64>>, src: &[f64], width: usize| {
                v.as_mut()
                    .unwrap()
                    .extend_from_slice(&src[start * width..(start + t) * width]);
            };
            for f in start + t..start + 2 * t {
                tg.gamma_next
                    .as_mut()
                    .unwrap()
                    .extend_from_slice(&gt.root(f));
            }
            push(&mut tg.joints, &gt.joints, nj * 3);
            push(&mut tg.theta, &p.theta, nj * 6);
            push(&mut tg.beta, &p.beta, ns);
            push(&mut tg.gamma, &p.gamma, 3);
            push(&mut tg.vertices, &self.vertices[si], nv * 3);
        }
        Ok(tg)
    }

    /// One optimizer step on `windows`; returns the loss report.
    fn train_step(&mut self, windows: &[Window]) -> Result<LossReport, HarnessError> {
        let step = self.step;
        let seed = self.config.seed;
        let crops = windows
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let k = k as u64;
                self.crop(
                    w,
                    mix_seed(&[seed, CROP, step, k]),
                    Some(mix_seed(&[seed, JITTER, step, k])),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let targets = self.targets(windows)?;
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, &self.store).training(seed, step);
        let refs: Vec<&ProcessedSequence> = crops.iter().collect();
        let out = self.model.forward(&mut ctx, &refs, true)?;
        let losses = compute_losses(&mut g, &out, &targets, &self.config.net.scales)?;
        if !losses.report.l_total.is_finite() {
            return Err(HarnessError::Contract(format!(
                "loss diverged at step {}",
                step + 1
            )));
        }
        let grads = g.backward(losses.total)?;
        self.store.zero_grads();
        grads.accumulate_into(&mut self.store);
        self.adam.step(&mut self.store)?;
        self.step += 1;
        Ok(losses.report)
    }

    /// Mean losses over the held-out windows, without dropout or jitter.
    pub fn validate(&self) -> Result<Option<LossReport>, HarnessError> {
        if self.val_windows.is_empty() {
            return Ok(None);
        }
        let mut sum = LossReport::default();
        for (b, batch) in self.val_windows.chunks(self.config.batch_size).enumerate() {
            let crops = batch
                .iter()
                .enumerate()
                .map(|(k, &w)| {
                    self.crop(
                        w,
                        mix_seed(&[self.config.seed, VALIDATION_CROP, b as u64, k as u64]),
                        None,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            let targets = self.targets(batch)?;
            let mut g = Graph::new();
            let mut ctx = Ctx::new(&mut g, &self.store);
            let refs: Vec<&ProcessedSequence> = crops.iter().collect();
            let out = self.model.forward(&mut ctx, &refs, true)?;
            let r = compute_losses(&mut g, &out, &targets, &self.config.net.scales)?.report;
            let w = batch.len() as f64;
            for (acc, v) in fields_mut(&mut sum).into_iter().zip(fields(&r)) {
                *acc += w * v;
            }
        }
        let n = self.val_windows.len() as f64;
        for acc in fields_mut(&mut sum) {
            *acc /= n;
        }
        Ok(Some(sum))
    }

    /// Runs one epoch. Returns `false` once the run is complete.
    pub fn run_epoch(&mut self) -> Result<bool, HarnessError> {
        if self.is_finished() {
            return Ok(false);
        }
        let mut order = self.train_windows.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[
            self.config.seed,
            SHUFFLE,
            self.epoch as u64,
        ])));
        for batch in order.chunks(self.config.batch_size) {
            if self.out_of_steps() {
                self.stopped = true;
                return Ok(false);
            }
            let losses = self.train_step(batch)?;
            log::debug!(
                "epoch {} step {}: l_total {:.6}",
                self.epoch + 1,
                self.step,
                losses.l_total
            );
            self.log.push(StepRecord {
                step: self.step,
                epoch: self.epoch,
                losses,
            });
        }
        self.epoch += 1;
        if let Some(v) = self.validate()? {
            log::info!("epoch {}: validation l_total {:.6}", self.epoch, v.l_total);
            self.validation.push((self.epoch, v));
        }
        if self.out_of_steps() {
            self.stopped = true;
        }
        Ok(!self.is_finished())
    }

    pub fn run(&mut self) -> Result<(), HarnessError> {
        while self.run_epoch()? {}
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<Checkpoint, HarnessError> {
        Checkpoint::capture(
            &self.config,
            self.epoch,
            self.step,
            &self.store,
            Some(&self.adam),
        )
    }

    pub fn finish(self) -> Result<TrainOutcome, HarnessError> {
        let checkpoint = self.checkpoint()?;
        Ok(TrainOutcome {
            checkpoint,
            log: self.log,
            validation: self.validation,
            model: self.model,
            store: self.store,
        })
    }
}

fn fields(r: &LossReport) -> [f64; 9] {
    [
        r.l_pred, r.l_joint, r.l_theta, r.l_beta, r.l_gamma, r.l_j, r.l_m, r.l_smpl, r.l_total,
    ]
}

fn fields_mut(r: &mut LossReport) -> [&mut f64; 9] {
    [
        &mut r.l_pred,
        &mut r.l_joint,
        &mut r.l_theta,
        &mut r.l_beta,
        &mut r.l_gamma,
        &mut r.l_j,
        &mut r.l_m,
        &mut r.l_smpl,
        &mut r.l_total,
    ]
}

/// Trains from scratch for `config.epochs` epochs (or `max_steps` steps).
pub fn train(config: &TrainConfig, data: &[LabeledSequence]) -> Result<TrainOutcome, HarnessError> {
    let mut trainer = Trainer::new(config, data)?;
    log::info!(
        "training on {} windows, {} held out",
        trainer.train_windows(),
        trainer.validation_windows()
    );
    trainer.run()?;
    trainer.finish()
}

/// The per-step loss log as CSV.
pub fn loss_csv(log: &[StepRecord]) -> String {
    let mut out = String::from("step,l_pred,l_joint,l_theta,l_beta,l_gamma,l_J,l_M,l_total\n");
    for r in log {
        let l = &r.losses;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.step, l.l_pred, l.l_joint, l.l_theta, l.l_beta, l.l_gamma, l.l_j, l.l_m, l.l_total
        ));
    }
    out
}
