use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::dist2;
use super::NetError;
use crate::autodiff::mix_seed;
use crate::radar::{Aabb, RawSequence};

/// Where the crop centers of a window came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropSource {
    GroundTruth,
    Predicted,
    InitialBox,
}

/// A fixed-size `T × N × C` window. Point coordinates stay in radar space;
/// `centers` holds each frame's crop center.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedSequence {
    pub window: usize,
    pub points_per_frame: usize,
    pub channels: usize,
    pub points: Vec<f64>,
    pub centers: Vec<[f64; 3]>,
    pub window_start: usize,
    pub source: CropSource,
}

impl ProcessedSequence {
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.points_per_frame * self.channels;
        &self.points[t * w..(t + 1) * w]
    }
}

/// Crops frames `start..start + centers.len()` to the box of `extent`
/// around each center and resamples every frame to exactly `n` points.
///
/// More than `n` points inside: `n` drawn uniformly without replacement
/// (kept in original order). Fewer: repeated cyclically from a seeded
/// random offset. None: the previous non-empty cropped frame of the window
/// is reused, or, if there is none, the `n` raw points nearest the center
/// (cycled if the frame has fewer). A frame with no points at all becomes
/// `n` copies of the center with zero extra channels.
pub fn crop_window(
    raw: &RawSequence,
    start: usize,
    centers: &[[f64; 3]],
    n: usize,
    extent: [f64; 3],
    seed: u64,
    source: CropSource,
) -> Result<ProcessedSequence, NetError> {
    let t_len = centers.len();
    if t_len == 0 || n == 0 {
        return Err(NetError::Contract(
            "crop needs at least one frame and one point".into(),
        ));
    }
    if start + t_len > raw.len() {
        return Err(NetError::Contract(format!(
            "window {start}..{} exceeds the sequence length {}",
            start + t_len,
            raw.len()
        )));
    }
    let c = raw.channels;
    let mut points = Vec::with_capacity(t_len * n * c);
    let mut last_filled: Option<usize> = None;
    for (i, center) in centers.iter().enumerate() {
        let frame = &raw.frames[start + i];
        let bbox = Aabb::centered(*center, extent);
        let inside: Vec<usize> = (0..frame.count())
            .filter(|&p| bbox.contains(frame.point(p)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, (start + i) as u64]));
        let chosen: Vec<usize> = if inside.len() >= n {
            if inside.len() == n {
                inside
            } else {
                let mut pick = rand::seq::index::sample(&mut rng, inside.len(), n).into_vec();
                pick.sort_unstable();
                pick.into_iter().map(|j| inside[j]).collect()
            }
        } else if !inside.is_empty() {
            let offset = rng.random_range(0..inside.len());
            (0..n)
                .map(|j| inside[(offset + j) % inside.len()])
                .collect()
        } else if let Some(prev) = last_filled {
            let w = n * c;
            let copy = points[prev * w..(prev + 1) * w].to_vec();
            points.extend_from_slice(&copy);
            continue;
        } else if frame.count() > 0 {
            let mut order: Vec<usize> = (0..frame.count()).collect();
            let d = |p: usize| {
                let q = frame.point(p);
                dist2(&[q[0], q[1], q[2]], center)
            };
            order.sort_by(|&a, &b| d(a).total_cmp(&d(b)).then(a.cmp(&b)));
            order.truncate(n);
            (0..n).map(|j| order[j % order.len()]).collect()
        } else {
            for _ in 0..n {
                points.extend_from_slice(center);
                points.extend(std::iter::repeat_n(0.0, c - 3));
            }
            continue;
        };
        for p in chosen {
            points.extend_from_slice(frame.point(p));
        }
        last_filled = Some(i);
    }
    Ok(ProcessedSequence {
        window: t_len,
        points_per_frame: n,
        channels: c,
        points,
        centers: centers.to_vec(),
        window_start: start,
        source,
    })
}
