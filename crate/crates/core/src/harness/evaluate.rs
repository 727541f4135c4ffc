use serde::{Deserialize, Serialize};

use super::metrics::{metric_mpjpe, metric_mpjre, metric_mpte, metric_mpvpe, metric_mte};
use super::train::LabeledSequence;
use super::HarnessError;
use crate::autodiff::{mix_seed, Graph, ParamStore};
use crate::body::{body_forward, BodyParams, BodyTemplate};
use crate::net::{crop_window, CropSource, Ctx, MmBat, ProcessedSequence};
use crate::radar::{GroundTruth, RawSequence};

/// Per-frame outputs for one window of `T` frames.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowEstimate {
    /// `T × 6·N_J`
    pub theta: Vec<f64>,
    /// `T × N_β`
    pub beta: Vec<f64>,
    pub gamma: Vec<[f64; 3]>,
    /// `T × N_J × 3`
    pub joints: Vec<f64>,
    /// `T × N_V × 3`
    pub vertices: Vec<f64>,
    /// Root translations predicted for the following `T` frames.
    pub gamma_next: Vec<[f64; 3]>,
}

/// Anything that turns a cropped window into body estimates.
pub trait Estimator {
    fn template(&self) -> &BodyTemplate;
    fn window(&self) -> usize;
    fn points(&self) -> usize;
    fn box_extent(&self) -> [f64; 3];
    fn estimate(
        &self,
        sequence: &RawSequence,
        crop: &ProcessedSequence,
    ) -> Result<WindowEstimate, HarnessError>;
}

pub struct NetEstimator<'a> {
    pub model: &'a MmBat,
    pub store: &'a ParamStore,
}

fn triples(v: &[f64]) -> Vec<[f64; 3]> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

impl Estimator for NetEstimator<'_> {
    fn template(&self) -> &BodyTemplate {
        &self.model.template
    }

    fn window(&self) -> usize {
        self.model.config.window
    }

    fn points(&self) -> usize {
        self.model.config.points
    }

    fn box_extent(&self) -> [f64; 3] {
        self.model.config.box_extent
    }

    fn estimate(
        &self,
        _sequence: &RawSequence,
        crop: &ProcessedSequence,
    ) -> Result<WindowEstimate, HarnessError> {
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, self.store);
        let out = self.model.forward(&mut ctx, &[crop], true)?;
        Ok(WindowEstimate {
            theta: g.value(out.theta).to_vec(),
            beta: g.value(out.beta).to_vec(),
            gamma: triples(g.value(out.gamma)),
            joints: g.value(out.joints).to_vec(),
            vertices: out
                .vertices
                .map(|v| g.value(v).to_vec())
                .unwrap_or_default(),
            gamma_next: triples(g.value(out.gamma_next)),
        })
    }
}

/// Returns the ground truth of whatever window it is shown, and the true
/// roots of the following window as its translation prediction.
pub struct GroundTruthEstimator {
    pub template: BodyTemplate,
    pub window: usize,
    pub points: usize,
    pub box_extent: [f64; 3],
}

impl Estimator for GroundTruthEstimator {
    fn template(&self) -> &BodyTemplate {
        &self.template
    }

    fn window(&self) -> usize {
        self.window
    }

    fn points(&self) -> usize {
        self.points
    }

    fn box_extent(&self) -> [f64; 3] {
        self.box_extent
    }

    fn estimate(
        &self,
        sequence: &RawSequence,
        crop: &ProcessedSequence,
    ) -> Result<WindowEstimate, HarnessError> {
        let gt = sequence
            .ground_truth
            .as_ref()
            .ok_or_else(|| HarnessError::Contract("no ground truth".into()))?;
        let (s, t) = (crop.window_start, crop.window);
        let p = gt.params.slice_frames(s, t);
        let body = body_forward(&self.template, &p)?;
        let last = sequence.len() - 1;
        Ok(WindowEstimate {
            theta: p.theta.clone(),
            beta: p.beta.clone(),
            gamma: triples(&p.gamma),
            joints: body.joints,
            vertices: body.vertices,
            gamma_next: (s + t..s + 2 * t).map(|f| gt.root(f.min(last))).collect(),
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Crop every window around the true root instead of the tracked one.
    pub oracle_crop: bool,
    pub seed: u64,
    /// Keep per-frame predictions for export.
    pub keep_frames: bool,
}

/// Metrics recomputed with β averaged over each window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeAveragedMetrics {
    pub mpjpe: f64,
    pub mpvpe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub name: String,
    pub frames: usize,
    pub mpjre: f64,
    pub mpjpe: f64,
    pub mpvpe: Option<f64>,
    pub mte: f64,
    /// Over frames that have a translation prediction (all but the first window).
    pub mpte: Option<f64>,
    pub shape_averaged: ShapeAveragedMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Degrees.
    pub mpjre: f64,
    /// Centimeters, like every distance below.
    pub mpjpe: f64,
    pub mpvpe: Option<f64>,
    pub mte: f64,
    pub mpte: Option<f64>,
    pub shape_averaged: ShapeAveragedMetrics,
    pub frames: usize,
    /// `"tracked"` (predicted translations) or `"ground_truth"`.
    pub crop: String,
    /// Joints included in the rotation error.
    pub mpjre_joints: String,
    pub per_sequence: Vec<SequenceMetrics>,
    pub config_fingerprint: String,
}

/// One evaluated frame, for external visualization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDump {
    pub sequence: String,
    pub frame: usize,
    pub crop_center: [f64; 3],
    pub joints: Vec<f64>,
    pub vertices: Vec<f64>,
    pub gamma_p: Option<[f64; 3]>,
}

pub struct EvalOutput {
    pub report: MetricsReport,
    pub frames: Vec<FrameDump>,
}

/// Everything gathered for one sequence, frame-aligned.
#[derive(Default)]
struct Collected {
    theta: Vec<f64>,
    joints: Vec<f64>,
    vertices: Vec<f64>,
    mean_shape_joints: Vec<f64>,
    mean_shape_vertices: Vec<f64>,
    predicted_roots: Vec<[f64; 3]>,
    true_roots: Vec<[f64; 3]>,
}

fn window_starts(len: usize, t: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=len - t).step_by(t).collect();
    if !len.is_multiple_of(t) {
        starts.push(len - t);
    }
    starts
}

fn run_sequence(
    est: &dyn Estimator,
    index: usize,
    seq: &LabeledSequence,
    gt: &GroundTruth,
    opts: &EvalOptions,
    dumps: &mut Vec<FrameDump>,
) -> Result<Collected, HarnessError> {
    let raw = &seq.sequence;
    let (len, t) = (raw.len(), est.window());
    let template = est.template();
    let (nj, nv, ns) = (template.n_joints, template.n_vertices, template.n_shape);
    let initial = if opts.oracle_crop {
        None
    } else {
        Some(raw.initial_box_center.ok_or_else(|| {
            HarnessError::Contract(format!("sequence {} has no initial box center", seq.name))
        })?)
    };
    let mut predicted: Vec<Option<[f64; 3]>> = vec![None; len];
    let mut regressed: Vec<Option<[f64; 3]>> = vec![None; len];
    let mut params = BodyParams::identity(len, nj, ns);
    let mut shape_avg = BodyParams::identity(len, nj, ns);
    let mut c = Collected::default();
    let mut joints = vec![0.0; len * nj * 3];
    let mut vertices = vec![0.0; len * nv * 3];
    let mut centers_used = vec![[0.0; 3]; len];
    let mut covered = 0;
    for (w, &start) in window_starts(len, t).iter().enumerate() {
        let (centers, source) = if let Some(init) = initial.filter(|_| w == 0) {
            (vec![init; t], CropSource::InitialBox)
        } else if opts.oracle_crop {
            (
                (start..start + t).map(|f| gt.root(f)).collect(),
                CropSource::GroundTruth,
            )
        } else {
            let centers = (start..start + t)
                .map(|f| {
                    predicted[f]
                        .or(regressed[f])
                        .expect("earlier windows cover every frame")
                })
                .collect();
            (centers, CropSource::Predicted)
        };
        let seed = mix_seed(&[opts.seed, index as u64, start as u64]);
        let crop = crop_window(
            raw,
            start,
            &centers,
            est.points(),
            est.box_extent(),
            seed,
            source,
        )?;
        let e = est.estimate(raw, &crop)?;
        let mean_beta: Vec<f64> = (0..ns)
            .map(|k| (0..t).map(|i| e.beta[i * ns + k]).sum::<f64>() / t as f64)
            .collect();
        for i in 0..t {
            let f = start + i;
            regressed[f].get_or_insert(e.gamma[i]);
            if f < covered {
                continue;
            }
            params.theta[f * nj * 6..(f + 1) * nj * 6]
                .copy_from_slice(&e.theta[i * nj * 6..(i + 1) * nj * 6]);
            params.beta[f * ns..(f + 1) * ns].copy_from_slice(&e.beta[i * ns..(i + 1) * ns]);
            params.gamma[f * 3..f * 3 + 3].copy_from_slice(&e.gamma[i]);
            shape_avg.theta[f * nj * 6..(f + 1) * nj * 6]
                .copy_from_slice(&e.theta[i * nj * 6..(i + 1) * nj * 6]);
            shape_avg.beta[f * ns..(f + 1) * ns].copy_from_slice(&mean_beta);
            shape_avg.gamma[f * 3..f * 3 + 3].copy_from_slice(&e.gamma[i]);
            joints[f * nj * 3..(f + 1) * nj * 3]
                .copy_from_slice(&e.joints[i * nj * 3..(i + 1) * nj * 3]);
            if nv > 0 {
                vertices[f * nv * 3..(f + 1) * nv * 3]
                    .copy_from_slice(&e.vertices[i * nv * 3..(i + 1) * nv * 3]);
            }
            centers_used[f] = centers[i];
        }
        for (i, g) in e.gamma_next.iter().enumerate() {
            let f = start + t + i;
            if f < len && predicted[f].is_none() {
                predicted[f] = Some(*g);
            }
        }
        covered = start + t;
    }
    let averaged = body_forward(template, &shape_avg)?;
    c.theta = params.theta;
    c.joints = joints;
    c.vertices = vertices;
    c.mean_shape_joints = averaged.joints;
    c.mean_shape_vertices = averaged.vertices;
    for (f, p) in predicted.iter().enumerate() {
        if let Some(p) = p {
            c.predicted_roots.push(*p);
            c.true_roots.push(gt.root(f));
        }
    }
    if opts.keep_frames {
        for f in 0..len {
            dumps.push(FrameDump {
                sequence: seq.name.clone(),
                frame: f,
                crop_center: centers_used[f],
                joints: c.joints[f * nj * 3..(f + 1) * nj * 3].to_vec(),
                vertices: c.vertices[f * nv * 3..(f + 1) * nv * 3].to_vec(),
                gamma_p: predicted[f],
            });
        }
    }
    Ok(c)
}

struct Truth {
    theta: Vec<f64>,
    joints: Vec<f64>,
    vertices: Vec<f64>,
}

fn score(
    c: &Collected,
    truth: &Truth,
    n_joints: usize,
) -> Result<
    (
        f64,
        f64,
        Option<f64>,
        f64,
        Option<f64>,
        ShapeAveragedMetrics,
    ),
    HarnessError,
> {
    let with_vertices = !truth.vertices.is_empty();
    let mpvpe = with_vertices
        .then(|| metric_mpvpe(&c.vertices, &truth.vertices))
        .transpose()?;
    let mpte = (!c.predicted_roots.is_empty())
        .then(|| metric_mpte(&c.predicted_roots, &c.true_roots))
        .transpose()?;
    let shape_averaged = ShapeAveragedMetrics {
        mpjpe: metric_mpjpe(&c.mean_shape_joints, &truth.joints)?,
        mpvpe: with_vertices
            .then(|| metric_mpvpe(&c.mean_shape_vertices, &truth.vertices))
            .transpose()?,
    };
    Ok((
        metric_mpjre(&c.theta, &truth.theta)?,
        metric_mpjpe(&c.joints, &truth.joints)?,
        mpvpe,
        metric_mte(&c.joints, &truth.joints, n_joints)?,
        mpte,
        shape_averaged,
    ))
}

/// Sequential window inference over every sequence: window 0 is cropped at
/// the sequence's initial box, later windows at the translations the
/// previous window predicted (or at the true roots with `oracle_crop`).
/// A trailing partial window is handled by one extra window aligned to the
/// end of the sequence, so every frame is scored once.
pub fn evaluate(
    est: &dyn Estimator,
    dataset: &[LabeledSequence],
    opts: &EvalOptions,
    config_fingerprint: &str,
) -> Result<EvalOutput, HarnessError> {
    let t = est.window();
    let template = est.template();
    let nj = template.n_joints;
    let mut all = Collected::default();
    let mut all_truth = Truth {
        theta: Vec::new(),
        joints: Vec::new(),
        vertices: Vec::new(),
    };
    let mut per_sequence = Vec::new();
    let mut dumps = Vec::new();
    for (index, seq) in dataset.iter().enumerate() {
        let gt = seq.sequence.ground_truth.as_ref().ok_or_else(|| {
            HarnessError::Contract(format!("sequence {} carries no ground truth", seq.name))
        })?;
        if gt.params.n_joints != nj || gt.params.n_shape != template.n_shape {
            return Err(HarnessError::Contract(format!(
                "sequence {} uses {} joints and {} shape coefficients, the model {} and {}",
                seq.name, gt.params.n_joints, gt.params.n_shape, nj, template.n_shape
            )));
        }
        if seq.sequence.len() < t {
            log::warn!(
                "skipping {}: {} frames, shorter than one window of {t}",
                seq.name,
                seq.sequence.len()
            );
            continue;
        }
        let c = run_sequence(est, index, seq, gt, opts, &mut dumps)?;
        let truth = Truth {
            theta: gt.params.theta.clone(),
            joints: gt.joints.clone(),
            vertices: if template.n_vertices > 0 {
                body_forward(template, &gt.params)?.vertices
            } else {
                Vec::new()
            },
        };
        let (mpjre, mpjpe, mpvpe, mte, mpte, shape_averaged) = score(&c, &truth, nj)?;
        per_sequence.push(SequenceMetrics {
            name: seq.name.clone(),
            frames: seq.sequence.len(),
            mpjre,
            mpjpe,
            mpvpe,
            mte,
            mpte,
            shape_averaged,
        });
        all.theta.extend(c.theta);
        all.joints.extend(c.joints);
        all.vertices.extend(c.vertices);
        all.mean_shape_joints.extend(c.mean_shape_joints);
        all.mean_shape_vertices.extend(c.mean_shape_vertices);
        all.predicted_roots.extend(c.predicted_roots);
        all.true_roots.extend(c.true_roots);
        all_truth.theta.extend(truth.theta);
        all_truth.joints.extend(truth.joints);
        all_truth.vertices.extend(truth.vertices);
    }
    if per_sequence.is_empty() {
        return Err(HarnessError::Contract(
            "no sequence long enough to evaluate".into(),
        ));
    }
    let (mpjre, mpjpe, mpvpe, mte, mpte, shape_averaged) = score(&all, &all_truth, nj)?;
    let report = MetricsReport {
        mpjre,
        mpjpe,
        mpvpe,
        mte,
        mpte,
        shape_averaged,
        frames: per_sequence.iter().map(|s| s.frames).sum(),
        crop: if opts.oracle_crop {
            "ground_truth"
        } else {
            "tracked"
        }
        .into(),
        mpjre_joints: "all".into(),
        per_sequence,
        config_fingerprint: config_fingerprint.into(),
    };
    Ok(EvalOutput {
        report,
        frames: dumps,
    })
}

/// Puts the translation predictor of `store` back to its initialization,
/// leaving every other weight as trained.
pub fn reset_translation_head(model: &MmBat, store: &mut ParamStore) -> Result<(), HarnessError> {
    let mut fresh = ParamStore::new();
    MmBat::new(&model.config, &mut fresh)?;
    for id in model.translation_params() {
        let src = fresh.get(id).values().to_vec();
        store.get_mut(id).values_mut().copy_from_slice(&src);
    }
    Ok(())
}
