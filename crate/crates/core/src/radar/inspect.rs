use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::render::Aabb;
use super::RawSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DopplerHistogram {
    /// Bin edges, m/s; `counts[i]` covers `[edges[i], edges[i + 1])`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl DopplerHistogram {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        let edges = (0..=bins)
            .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
            .collect();
        Self {
            edges,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    fn add(&mut self, v: f64) {
        let (lo, hi) = (self.edges[0], *self.edges.last().expect("edges"));
        if v < lo {
            self.underflow += 1;
        } else if v >= hi {
            self.overflow += 1;
        } else {
            let bins = self.counts.len();
            let i = (((v - lo) / (hi - lo)) * bins as f64) as usize;
            self.counts[i.min(bins - 1)] += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectReport {
    pub frames: usize,
    pub channels: usize,
    pub frame_rate: f64,
    pub point_counts: Vec<usize>,
    pub total_points: usize,
    pub doppler: DopplerHistogram,
    pub box_extent: [f64; 3],
    /// Fraction of points inside the box centered on the ground-truth root;
    /// `None` without ground truth or without points.
    pub in_box_fraction: Option<f64>,
}

/// Point-count, Doppler and in-box diagnostics for one sequence.
pub fn inspect(seq: &RawSequence, box_extent: [f64; 3]) -> InspectReport {
    let mut doppler = DopplerHistogram::new(-3.0, 3.0, 12);
    let mut inside = 0usize;
    let mut total = 0usize;
    let mut counts = Vec::with_capacity(seq.len());
    for (t, f) in seq.frames.iter().enumerate() {
        counts.push(f.count());
        let bbox = seq
            .ground_truth
            .as_ref()
            .map(|gt| Aabb::centered(gt.root(t), box_extent));
        for p in f.points() {
            total += 1;
            doppler.add(p[3]);
            if bbox.is_some_and(|b| b.contains(p)) {
                inside += 1;
            }
        }
    }
    InspectReport {
        frames: seq.len(),
        channels: seq.channels,
        frame_rate: seq.frame_rate,
        point_counts: counts,
        total_points: total,
        doppler,
        box_extent,
        in_box_fraction: (seq.ground_truth.is_some() && total > 0)
            .then(|| inside as f64 / total as f64),
    }
}

impl InspectReport {
    /// Human-readable summary followed by a `frame,count` CSV block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mean = if self.frames > 0 {
            self.total_points as f64 / self.frames as f64
        } else {
            0.0
        };
        let _ = writeln!(s, "frames: {}", self.frames);
        let _ = writeln!(s, "channels: {}", self.channels);
        let _ = writeln!(s, "frame rate: {} Hz", self.frame_rate);
        let _ = writeln!(
            s,
            "points: {} total, {mean:.2} per frame",
            self.total_points
        );
        if let (Some(lo), Some(hi)) = (
            self.point_counts.iter().min(),
            self.point_counts.iter().max(),
        ) {
            let _ = writeln!(s, "points per frame: min {lo}, max {hi}");
        }
        match self.in_box_fraction {
            Some(f) => {
                let _ = writeln!(
                    s,
                    "in ground-truth box {:?} m: {:.2}%",
                    self.box_extent,
                    100.0 * f
                );
            }
            None => {
                let _ = writeln!(s, "in ground-truth box: n/a");
            }
        }
        let _ = writeln!(s, "doppler histogram (m/s):");
        let _ = writeln!(
            s,
            "  < {:>5.2}: {}",
            self.doppler.edges[0], self.doppler.underflow
        );
        for (i, c) in self.doppler.counts.iter().enumerate() {
            let _ = writeln!(
                s,
                "  [{:>5.2}, {:>5.2}): {c}",
                self.doppler.edges[i],
                self.doppler.edges[i + 1]
            );
        }
        let _ = writeln!(
            s,
            "  >= {:>4.2}: {}",
            self.doppler.edges.last().unwrap(),
            self.doppler.overflow
        );
        let _ = writeln!(s, "frame,count");
        for (i, c) in self.point_counts.iter().enumerate() {
            let _ = writeln!(s, "{i},{c}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::TemplateSpec;
    use crate::radar::{simulate_sequence, NoiseConfig, SimulationConfig};

    fn config(noise: NoiseConfig) -> SimulationConfig {
        SimulationConfig {
            seconds: 2.0,
            noise,
            template: TemplateSpec {
                n_vertices: 300,
                ..TemplateSpec::default()
            },
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn noiseless_walk_is_fully_inside_the_box() {
        let cfg = config(NoiseConfig::noiseless());
        let seq = simulate_sequence(&cfg, &cfg.template.build().unwrap()).unwrap();
        let r = inspect(&seq, [1.0, 1.0, 3.0]);
        assert!(r.total_points > 0);
        assert_eq!(r.in_box_fraction, Some(1.0));
        assert_eq!(
            r.doppler.counts.iter().sum::<usize>() + r.doppler.underflow + r.doppler.overflow,
            r.total_points
        );
    }

    #[test]
    fn clutter_only_in_box_fraction_is_a_volume_ratio() {
        let noise = NoiseConfig {
            body_points_per_frame: 0.0,
            clutter_points_per_frame: 200.0,
            ..NoiseConfig::noiseless()
        };
        let mut cfg = config(noise);
        cfg.seconds = 5.0;
        let seq = simulate_sequence(&cfg, &cfg.template.build().unwrap()).unwrap();
        let r = inspect(&seq, [1.0, 1.0, 3.0]);
        // expected fraction: overlap of each frame's box with the region over the region volume
        let region = cfg.noise.clutter_region;
        let gt = seq.ground_truth.as_ref().unwrap();
        let mut expect = 0.0;
        for (t, f) in seq.frames.iter().enumerate() {
            let b = Aabb::centered(gt.root(t), [1.0, 1.0, 3.0]);
            let overlap: f64 = (0..3)
                .map(|k| (b.max[k].min(region.max[k]) - b.min[k].max(region.min[k])).max(0.0))
                .product();
            expect += f.count() as f64 * overlap / region.volume();
        }
        let n = r.total_points as f64;
        let p = expect / n;
        let sd = (p * (1.0 - p) / n).sqrt();
        let got = r.in_box_fraction.unwrap();
        assert!((got - p).abs() < 3.0 * sd, "{got} vs {p} ± {sd}");
    }

    #[test]
    fn empty_sequence_reports_zero_frames() {
        let cfg = config(NoiseConfig::noiseless());
        let mut seq = simulate_sequence(&cfg, &cfg.template.build().unwrap()).unwrap();
        seq.frames.clear();
        seq.ground_truth = None;
        let r = inspect(&seq, [1.0, 1.0, 3.0]);
        assert_eq!(r.frames, 0);
        assert!(r.to_text().starts_with("frames: 0"));
    }
}
