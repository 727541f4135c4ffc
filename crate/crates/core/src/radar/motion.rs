use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::RadarError;
use crate::body::{matrix_to_rot6d, rot_x, rot_y, rot_z, BodyParams, BodyTemplate, JointRole};

/// Height of the floor in radar coordinates (radar mounted 1 m above it).
pub const FLOOR_Z: f64 = -1.0;

/// Center of the scene the subject moves around in.
const ROOM_CENTER: [f64; 2] = [0.0, 3.5];

/// Distance covered per gait cycle, meters.
const STRIDE: f64 = 1.4;

/// Shoulder abduction bringing the arms down from the rest T-pose.
const ARM_DOWN: f64 = 1.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    WalkLine,
    WalkCircle,
    ArmSwing,
    Squat,
}

impl MotionKind {
    pub const ALL: [MotionKind; 4] = [
        MotionKind::WalkLine,
        MotionKind::WalkCircle,
        MotionKind::ArmSwing,
        MotionKind::Squat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MotionKind::WalkLine => "walk_line",
            MotionKind::WalkCircle => "walk_circle",
            MotionKind::ArmSwing => "arm_swing",
            MotionKind::Squat => "squat",
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionKind {
    type Err = RadarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| RadarError::Config(format!("unknown motion kind {s:?} (expected walk_line, walk_circle, arm_swing or squat)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Walking speed, m/s.
    pub speed: f64,
    pub frame_rate: f64,
    /// Relative spread of per-sequence joint-angle amplitudes.
    pub amplitude_jitter: f64,
    /// Standard deviation of the per-sequence shape coefficients.
    pub shape_sigma: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            speed: 1.0,
            frame_rate: 10.0,
            amplitude_jitter: 0.15,
            shape_sigma: 1.0,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<(), RadarError> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(RadarError::Config(format!(
                "frame rate must be positive, got {}",
                self.frame_rate
            )));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(RadarError::Config(format!(
                "speed must be non-negative, got {}",
                self.speed
            )));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) || !(self.shape_sigma >= 0.0) {
            return Err(RadarError::Config(
                "amplitude jitter must be in [0, 1) and shape sigma non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A smooth, seeded motion that can be evaluated at any time.
#[derive(Clone, Debug)]
pub struct MotionModel {
    kind: MotionKind,
    speed: f64,
    duration: f64,
    roles: Vec<JointRole>,
    n_shape: usize,
    beta: Vec<f64>,
    phase: f64,
    amplitude: f64,
    center: Vector3<f64>,
    heading: f64,
    /// Circle radius and turning direction for `walk_circle`.
    radius: f64,
    turn: f64,
    leg_length: f64,
}

impl MotionModel {
    pub fn new(
        template: &BodyTemplate,
        kind: MotionKind,
        duration: f64,
        config: &MotionConfig,
        seed: u64,
    ) -> Result<Self, RadarError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Normal::new(0.0, config.shape_sigma.max(1e-300)).expect("finite sigma");
        let beta: Vec<f64> = (0..template.n_shape)
            .map(|_| {
                if config.shape_sigma > 0.0 {
                    shape.sample(&mut rng).clamp(-2.0, 2.0)
                } else {
                    0.0
                }
            })
            .collect();
        let jitter = config.amplitude_jitter;
        let amplitude = if jitter > 0.0 {
            rng.random_range(1.0 - jitter..1.0 + jitter)
        } else {
            1.0
        };
        let phase = rng.random_range(0.0..TAU);
        let spread = |rng: &mut ChaCha8Rng, r: f64| rng.random_range(-r..r);
        let mut center = Vector3::new(
            ROOM_CENTER[0] + spread(&mut rng, 0.5),
            ROOM_CENTER[1] + spread(&mut rng, 0.5),
            0.0,
        );
        let (heading, radius, turn) = match kind {
            MotionKind::WalkLine => (rng.random_range(-PI..PI), 0.0, 0.0),
            MotionKind::WalkCircle => {
                let turn = if rng.random::<bool>() { 1.0 } else { -1.0 };
                (rng.random_range(-PI..PI), rng.random_range(1.2..1.6), turn)
            }
            // facing the radar
            MotionKind::ArmSwing | MotionKind::Squat => (PI + spread(&mut rng, 0.3), 0.0, 0.0),
        };

        // stand on the floor: the lowest rest vertex (or joint) touches z = FLOOR_Z
        let shaped = template.shaped_vertices(&beta);
        let lowest = shaped
            .iter()
            .map(|v| v.z)
            .chain(template.shaped_joints(&beta).iter().map(|j| j.z))
            .fold(f64::INFINITY, f64::min);
        center.z = FLOOR_Z - lowest;

        let joints = template.shaped_joints(&beta);
        let leg_length = template
            .roles
            .iter()
            .position(|r| matches!(r, JointRole::Knee(_)))
            .and_then(|k| {
                let hip = template.parents[k]?;
                let ankle = template.parents.iter().position(|p| *p == Some(k))?;
                Some((joints[k] - joints[hip]).norm() + (joints[ankle] - joints[k]).norm())
            })
            .unwrap_or(0.0);

        Ok(Self {
            kind,
            speed: config.speed,
            duration,
            roles: template.roles.clone(),
            n_shape: template.n_shape,
            beta,
            phase,
            amplitude,
            center,
            heading,
            radius,
            turn,
            leg_length,
        })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Root translation and heading (yaw about +z) at time `t`.
    fn root(&self, t: f64) -> (Vector3<f64>, f64) {
        match self.kind {
            MotionKind::WalkLine => {
                let dir = Vector3::new(-self.heading.sin(), self.heading.cos(), 0.0);
                (
                    self.center + dir * (self.speed * (t - 0.5 * self.duration)),
                    self.heading,
                )
            }
            MotionKind::WalkCircle => {
                let angle = self.heading + self.turn * self.speed / self.radius * t;
                let offset = Vector3::new(angle.cos(), angle.sin(), 0.0) * self.radius;
                let tangent = Vector3::new(-angle.sin(), angle.cos(), 0.0) * self.turn;
                (self.center + offset, (-tangent.x).atan2(tangent.y))
            }
            MotionKind::ArmSwing => (self.center, self.heading),
            MotionKind::Squat => {
                let a = self.squat_angle(t);
                let drop = self.leg_length * (1.0 - a.cos());
                (self.center - Vector3::z() * drop, self.heading)
            }
        }
    }

    fn gait(&self, t: f64) -> f64 {
        let freq = match self.kind {
            MotionKind::WalkLine | MotionKind::WalkCircle => (self.speed / STRIDE).max(0.2),
            MotionKind::ArmSwing => 0.5,
            MotionKind::Squat => 0.4,
        };
        TAU * freq * t + self.phase
    }

    fn squat_angle(&self, t: f64) -> f64 {
        0.5 * self.amplitude * (1.0 - self.gait(t).cos())
    }

    fn local_rotation(&self, j: usize, t: f64) -> Matrix3<f64> {
        let w = self.gait(t);
        let a = self.amplitude;
        let role = self.roles[j];
        let side = |s: crate::body::Side| s.sign();
        match self.kind {
            MotionKind::WalkLine | MotionKind::WalkCircle => {
                let leg = |s| w + if side(s) > 0.0 { 0.0 } else { PI };
                match role {
                    JointRole::Hip(s) => rot_x(0.45 * a * leg(s).sin()),
                    JointRole::Knee(s) => rot_x(-0.35 * a * (1.0 - (leg(s) + 0.6).cos())),
                    JointRole::Ankle(s) => rot_x(0.15 * a * leg(s).sin()),
                    JointRole::Shoulder(s) => {
                        rot_x(-0.35 * a * leg(s).sin()) * rot_y(side(s) * ARM_DOWN)
                    }
                    JointRole::Elbow(s) => rot_z(side(s) * (0.3 + 0.15 * a * (1.0 + leg(s).sin()))),
                    JointRole::Spine => rot_z(0.06 * a * w.sin()),
                    JointRole::Head => rot_x(0.04 * (2.0 * w).sin()),
                    JointRole::Link => rot_x(0.3 * a * (w + 0.7 * j as f64).sin()),
                    _ => Matrix3::identity(),
                }
            }
            MotionKind::ArmSwing => match role {
                JointRole::Shoulder(s) => {
                    let swing = 0.9 * a * (w + if side(s) > 0.0 { 0.0 } else { PI }).sin();
                    rot_x(swing) * rot_y(side(s) * ARM_DOWN)
                }
                JointRole::Elbow(s) => rot_z(side(s) * 0.3),
                JointRole::Spine => rot_z(0.1 * a * w.sin()),
                JointRole::Link => rot_x(0.6 * a * (w + 0.7 * j as f64).sin()),
                _ => Matrix3::identity(),
            },
            MotionKind::Squat => {
                let q = self.squat_angle(t);
                match role {
                    JointRole::Hip(_) => rot_x(q),
                    JointRole::Knee(_) => rot_x(-2.0 * q),
                    JointRole::Ankle(_) => rot_x(q),
                    JointRole::Shoulder(s) => rot_x(q) * rot_y(side(s) * ARM_DOWN),
                    JointRole::Spine => rot_x(0.1 * q),
                    JointRole::Link => {
                        rot_x(0.5 * q * if j.is_multiple_of(2) { 1.0 } else { -1.0 })
                    }
                    _ => Matrix3::identity(),
                }
            }
        }
    }

    /// Pose (`6·N_J`) and root translation at time `t`.
    pub fn pose_at(&self, t: f64) -> (Vec<f64>, Vector3<f64>) {
        let (gamma, heading) = self.root(t);
        let mut theta = Vec::with_capacity(6 * self.roles.len());
        for j in 0..self.roles.len() {
            let mut r = self.local_rotation(j, t);
            if j == 0 {
                r = rot_z(heading) * r;
            }
            theta.extend_from_slice(&matrix_to_rot6d(&r));
        }
        (theta, gamma)
    }

    /// Parameters sampled at the given times.
    pub fn params_at(&self, times: &[f64]) -> BodyParams {
        let mut p = BodyParams::identity(times.len(), self.roles.len(), self.n_shape);
        p.theta.clear();
        p.beta.clear();
        p.gamma.clear();
        for &t in times {
            let (theta, gamma) = self.pose_at(t);
            p.theta.extend(theta);
            p.beta.extend_from_slice(&self.beta);
            p.gamma.extend_from_slice(gamma.as_slice());
        }
        p
    }
}

/// Number of frames in `duration` seconds at `frame_rate`.
pub(crate) fn frame_count(duration: f64, frame_rate: f64) -> Result<usize, RadarError> {
    let n = (duration * frame_rate + 1e-9).floor();
    if !(n >= 1.0) || !n.is_finite() {
        return Err(RadarError::Config(format!(
            "duration {duration} s at {frame_rate} Hz yields no frames"
        )));
    }
    Ok(n as usize)
}

/// Per-frame body parameters for `duration` seconds of motion, frame `k` at
/// time `k / frame_rate`.
pub fn generate_motion(
    template: &BodyTemplate,
    kind: MotionKind,
    duration: f64,
    config: &MotionConfig,
    seed: u64,
) -> Result<BodyParams, RadarError> {
    config.validate()?;
    let n = frame_count(duration, config.frame_rate)?;
    let model = MotionModel::new(template, kind, duration, config, seed)?;
    let times: Vec<f64> = (0..n).map(|k| k as f64 / config.frame_rate).collect();
    Ok(model.params_at(&times))
}
