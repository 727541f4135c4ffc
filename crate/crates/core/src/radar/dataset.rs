//! `MMRD` dataset files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "MMRD" | version u32 | frame_count u32 | channels u32 | frame_rate f64
//! per frame:   count u32 | count × channels f64 | timestamp f64
//! gt flag u8
//!   if 1:      n_joints u32 | n_shape u32
//!              theta T×6·N_J f64 | beta T×N_β f64 | gamma T×3 f64
//!              root trajectory T×3 f64 | joints T×N_J×3 f64
//! box flag u8
//!   if 1:      initial box center 3 × f64
//! ```

use std::io::Write;
use std::path::Path;

use super::{PointFrame, RadarError};
use crate::body::BodyParams;

pub const MAGIC: &[u8; 4] = b"MMRD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub params: BodyParams,
    /// `T × N_J × 3` joint positions, meters.
    pub joints: Vec<f64>,
}

impl GroundTruth {
    pub fn root(&self, t: usize) -> [f64; 3] {
        let o = t * self.params.n_joints * 3;
        [self.joints[o], self.joints[o + 1], self.joints[o + 2]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawSequence {
    pub channels: usize,
    pub frame_rate: f64,
    pub frames: Vec<PointFrame>,
    pub ground_truth: Option<GroundTruth>,
    pub initial_box_center: Option<[f64; 3]>,
}

impl RawSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<(), RadarError> {
        if self.channels < 4 {
            return Err(RadarError::Contract(format!(
                "need at least 4 channels, got {}",
                self.channels
            )));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(RadarError::Contract(format!(
                "frame rate must be positive, got {}",
                self.frame_rate
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.channels != self.channels || f.data.len() % self.channels != 0 {
                return Err(RadarError::Contract(format!(
                    "frame {i} has an inconsistent channel layout"
                )));
            }
            if !f.timestamp.is_finite() || f.data.iter().any(|v| !v.is_finite()) {
                return Err(RadarError::Contract(format!(
                    "frame {i} contains non-finite values"
                )));
            }
            if i > 0 && f.timestamp <= self.frames[i - 1].timestamp {
                return Err(RadarError::Contract(format!(
                    "timestamps not strictly increasing at frame {i}"
                )));
            }
        }
        if let Some(gt) = &self.ground_truth {
            gt.params.validate()?;
            if gt.params.n_frames != self.frames.len() {
                return Err(RadarError::Contract(format!(
                    "ground truth has {} frames, sequence has {}",
                    gt.params.n_frames,
                    self.frames.len()
                )));
            }
            if gt.joints.len() != gt.params.n_frames * gt.params.n_joints * 3
                || gt.joints.iter().any(|v| !v.is_finite())
            {
                return Err(RadarError::Contract(
                    "ground-truth joints have the wrong extent or are not finite".into(),
                ));
            }
        }
        if let Some(c) = self.initial_box_center {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(RadarError::Contract(
                    "initial box center must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), RadarError> {
    let v = u32::try_from(v)
        .map_err(|_| RadarError::Contract(format!("{v} does not fit the u32 field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(seq: &RawSequence) -> Result<Vec<u8>, RadarError> {
    seq.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, seq.frames.len())?;
    put_u32(&mut out, seq.channels)?;
    put_f64s(&mut out, &[seq.frame_rate]);
    for f in &seq.frames {
        put_u32(&mut out, f.count())?;
        put_f64s(&mut out, &f.data);
        put_f64s(&mut out, &[f.timestamp]);
    }
    match &seq.ground_truth {
        None => out.push(0),
        Some(gt) => {
            out.push(1);
            let p = &gt.params;
            put_u32(&mut out, p.n_joints)?;
            put_u32(&mut out, p.n_shape)?;
            put_f64s(&mut out, &p.theta);
            put_f64s(&mut out, &p.beta);
            put_f64s(&mut out, &p.gamma);
            for t in 0..p.n_frames {
                put_f64s(&mut out, &gt.root(t));
            }
            put_f64s(&mut out, &gt.joints);
        }
    }
    match seq.initial_box_center {
        None => out.push(0),
        Some(c) => {
            out.push(1);
            put_f64s(&mut out, &c);
        }
    }
    Ok(out)
}

pub fn write_dataset(seq: &RawSequence, path: &Path) -> Result<(), RadarError> {
    let bytes = encode(seq)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> RadarError {
        RadarError::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], RadarError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, RadarError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize, RadarError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, RadarError> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| self.err(format!("{what} length overflows")))?;
        let raw = self.take(len, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<RawSequence, RadarError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(RadarError::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected \"MMRD\""),
        });
    }
    let at = c.pos;
    let version = c.u32("version")?;
    if version != FORMAT_VERSION as usize {
        return Err(RadarError::Format {
            offset: at as u64,
            message: format!("unsupported version {version}"),
        });
    }
    let n_frames = c.u32("frame count")?;
    let at = c.pos;
    let channels = c.u32("channel count")?;
    if channels < 4 {
        return Err(RadarError::Format {
            offset: at as u64,
            message: format!("channel count {channels} below 4"),
        });
    }
    let at = c.pos;
    let frame_rate = c.f64s(1, "frame rate")?[0];
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(RadarError::Format {
            offset: at as u64,
            message: format!("invalid frame rate {frame_rate}"),
        });
    }
    let mut frames: Vec<PointFrame> = Vec::with_capacity(n_frames.min(1 << 16));
    for i in 0..n_frames {
        let count = c.u32("point count")?;
        let at = c.pos;
        let data = c.f64s(count * channels, "point payload")?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(RadarError::Format {
                offset: at as u64,
                message: format!("non-finite point in frame {i}"),
            });
        }
        let at = c.pos;
        let timestamp = c.f64s(1, "timestamp")?[0];
        if !timestamp.is_finite() || frames.last().is_some_and(|p| timestamp <= p.timestamp) {
            return Err(RadarError::Format {
                offset: at as u64,
                message: format!("timestamp of frame {i} is not strictly increasing"),
            });
        }
        frames.push(PointFrame {
            channels,
            data,
            timestamp,
        });
    }

    let at = c.pos;
    let ground_truth = match c.u8("ground-truth flag")? {
        0 => None,
        1 => {
            let n_joints = c.u32("joint count")?;
            let n_shape = c.u32("shape count")?;
            let theta = c.f64s(n_frames * n_joints * 6, "theta")?;
            let beta = c.f64s(n_frames * n_shape, "beta")?;
            let gamma = c.f64s(n_frames * 3, "gamma")?;
            let at_root = c.pos;
            let root = c.f64s(n_frames * 3, "root trajectory")?;
            let joints = c.f64s(n_frames * n_joints * 3, "joints")?;
            let params = BodyParams {
                n_frames,
                n_joints,
                n_shape,
                theta,
                beta,
                gamma,
            };
            params.validate().map_err(|e| RadarError::Format {
                offset: at as u64,
                message: e.to_string(),
            })?;
            let gt = GroundTruth { params, joints };
            if n_joints == 0 || (0..n_frames).any(|t| gt.root(t)[..] != root[3 * t..3 * t + 3]) {
                return Err(RadarError::Format {
                    offset: at_root as u64,
                    message: "root trajectory disagrees with the ground-truth joints".into(),
                });
            }
            Some(gt)
        }
        f => {
            return Err(RadarError::Format {
                offset: at as u64,
                message: format!("invalid ground-truth flag {f}"),
            })
        }
    };
    let at = c.pos;
    let initial_box_center = match c.u8("box flag")? {
        0 => None,
        1 => {
            let v = c.f64s(3, "initial box center")?;
            Some([v[0], v[1], v[2]])
        }
        f => {
            return Err(RadarError::Format {
                offset: at as u64,
                message: format!("invalid box flag {f}"),
            })
        }
    };
    if c.pos != bytes.len() {
        return Err(c.err(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let seq = RawSequence {
        channels,
        frame_rate,
        frames,
        ground_truth,
        initial_box_center,
    };
    seq.validate().map_err(|e| RadarError::Format {
        offset: c.pos as u64,
        message: e.to_string(),
    })?;
    Ok(seq)
}

pub fn read_dataset(path: &Path) -> Result<RawSequence, RadarError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{forward_kinematics, make_template};
    use crate::radar::{generate_motion, MotionConfig, MotionKind};

    fn sample() -> RawSequence {
        let t = make_template(17, 40, 4, 1).unwrap();
        let params =
            generate_motion(&t, MotionKind::WalkCircle, 0.5, &MotionConfig::default(), 3).unwrap();
        let joints = forward_kinematics(&t, &params).unwrap().joints;
        let frames = (0..5)
            .map(|i| PointFrame {
                channels: 5,
                data: (0..5 * i)
                    .map(|k| (k as f64).sin() * 1e3 + f64::EPSILON)
                    .collect(),
                timestamp: i as f64 * 0.1,
            })
            .collect();
        RawSequence {
            channels: 5,
            frame_rate: 10.0,
            frames,
            ground_truth: Some(GroundTruth { params, joints }),
            initial_box_center: Some([0.1, 3.3, -0.07]),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mmrd");
        let seq = sample();
        assert_eq!(seq.frames[0].count(), 0);
        write_dataset(&seq, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, seq);
        assert_eq!(encode(&back).unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn optional_blocks_may_be_absent() {
        let seq = RawSequence {
            ground_truth: None,
            initial_box_center: None,
            ..sample()
        };
        assert_eq!(decode(&encode(&seq).unwrap()).unwrap(), seq);
        let empty = RawSequence {
            frames: vec![],
            ground_truth: None,
            ..sample()
        };
        assert_eq!(decode(&encode(&empty).unwrap()).unwrap().len(), 0);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[1] = b'X';
        match decode(&bytes) {
            Err(RadarError::Format { offset: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_an_offset() {
        let bytes = encode(&sample()).unwrap();
        for cut in [3, 10, 30, bytes.len() - 1] {
            match decode(&bytes[..cut]) {
                Err(RadarError::Format { offset, message }) => {
                    assert!(offset as usize <= cut, "{message}");
                    assert!(message.contains("truncated"), "{message}");
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn version_and_timestamp_violations_are_format_errors() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            decode(&bytes),
            Err(RadarError::Format { offset: 4, .. })
        ));

        let mut seq = sample();
        seq.ground_truth = None;
        seq.initial_box_center = None;
        let mut bytes = encode(&seq).unwrap();
        // frame 1 timestamp sits after header (24) + empty frame 0 (4 + 8) + count (4) + one point
        let ts = 24 + 12 + 4 + 5 * 8;
        bytes[ts..ts + 8].copy_from_slice(&(-1.0f64).to_le_bytes());
        match decode(&bytes) {
            Err(RadarError::Format { offset, .. }) => assert_eq!(offset as usize, ts),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_sequences_are_not_written() {
        let mut seq = sample();
        seq.frames[2].timestamp = 0.0;
        assert!(matches!(encode(&seq), Err(RadarError::Contract(_))));
    }
}
