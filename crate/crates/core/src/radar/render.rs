use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::RadarError;
use crate::body::{BodyParams, BodyTemplate};

/// Channels per simulated point: x, y, z, radial velocity, intensity.
pub const CHANNELS: usize = 5;

/// One radar scan. `data` is `count × channels`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFrame {
    pub channels: usize,
    pub data: Vec<f64>,
    pub timestamp: f64,
}

impl PointFrame {
    pub fn empty(channels: usize, timestamp: f64) -> Self {
        Self {
            channels,
            data: Vec::new(),
            timestamp,
        }
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        let p = self.point(i);
        Vector3::new(p[0], p[1], p[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn centered(center: [f64; 3], extent: [f64; 3]) -> Self {
        Self {
            min: [0, 1, 2].map(|k| center[k] - 0.5 * extent[k]),
            max: [0, 1, 2].map(|k| center[k] + 0.5 * extent[k]),
        }
    }

    /// Closed-boundary containment.
    pub fn contains(&self, p: &[f64]) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.max[k] - self.min[k]).product()
    }
}

/// Plane `{p : ⟨normal, p⟩ = offset}`; ghosts are single-bounce mirror images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorPlane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl MirrorPlane {
    fn unit(&self) -> (Vector3<f64>, f64) {
        let n = Vector3::from(self.normal);
        let len = n.norm();
        (n / len, self.offset / len)
    }

    pub fn reflect_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (n, d) = self.unit();
        p - n * (2.0 * (n.dot(p) - d))
    }

    pub fn reflect_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (n, _) = self.unit();
        v - n * (2.0 * n.dot(v))
    }

    /// Signed distance, positive on the side the normal points to.
    pub fn signed_distance(&self, p: &[f64]) -> f64 {
        let (n, d) = self.unit();
        n.dot(&Vector3::new(p[0], p[1], p[2])) - d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Poisson mean of body reflections per frame.
    pub body_points_per_frame: f64,
    /// Poisson mean of static clutter points per frame.
    pub clutter_points_per_frame: f64,
    pub clutter_region: Aabb,
    pub ghost_probability: f64,
    pub ghost_mirror_plane: MirrorPlane,
    /// Gaussian position jitter, meters, truncated at two sigma.
    pub position_jitter_sigma: f64,
    pub doppler_noise_sigma: f64,
    /// Log-normal sigma of the intensity multiplier.
    pub intensity_log_sigma: f64,
    /// Intensity factor applied to ghost points.
    pub ghost_attenuation: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            body_points_per_frame: 150.0,
            clutter_points_per_frame: 20.0,
            clutter_region: Aabb {
                min: [-3.0, 0.5, -1.0],
                max: [3.0, 6.0, 1.5],
            },
            ghost_probability: 0.05,
            ghost_mirror_plane: MirrorPlane {
                normal: [0.0, 1.0, 0.0],
                offset: 6.0,
            },
            position_jitter_sigma: 0.02,
            doppler_noise_sigma: 0.05,
            intensity_log_sigma: 0.3,
            ghost_attenuation: 0.3,
        }
    }
}

impl NoiseConfig {
    /// Every noise source switched off.
    pub fn noiseless() -> Self {
        Self {
            clutter_points_per_frame: 0.0,
            ghost_probability: 0.0,
            position_jitter_sigma: 0.0,
            doppler_noise_sigma: 0.0,
            intensity_log_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RadarError> {
        let nonneg = [
            ("body_points_per_frame", self.body_points_per_frame),
            ("clutter_points_per_frame", self.clutter_points_per_frame),
            ("position_jitter_sigma", self.position_jitter_sigma),
            ("doppler_noise_sigma", self.doppler_noise_sigma),
            ("intensity_log_sigma", self.intensity_log_sigma),
            ("ghost_attenuation", self.ghost_attenuation),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(RadarError::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.ghost_probability) {
            return Err(RadarError::Config(format!(
                "ghost_probability {} outside [0, 1]",
                self.ghost_probability
            )));
        }
        let r = &self.clutter_region;
        if (0..3).any(|k| !(r.min[k] < r.max[k])) {
            return Err(RadarError::Config(
                "clutter_region min must be below max on every axis".into(),
            ));
        }
        let n = Vector3::from(self.ghost_mirror_plane.normal).norm();
        if !(n > 1e-12 && n.is_finite()) {
            return Err(RadarError::Config(
                "ghost_mirror_plane normal must be non-zero".into(),
            ));
        }
        Ok(())
    }
}

/// Projection of `v` onto the line of sight from the radar to `p`; positive
/// when receding.
pub fn radial_velocity(
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    radar_origin: &Vector3<f64>,
) -> Result<f64, RadarError> {
    let los = p - radar_origin;
    let range = los.norm();
    if range == 0.0 {
        return Err(RadarError::Contract("radial velocity at zero range".into()));
    }
    Ok(v.dot(&los) / range)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng) as usize
    }
}

/// Renders one radar frame of the subject at `params_now` (frame 0 of both
/// parameter sets is used). Surface velocity is the finite difference
/// `(x_now − x_prev) / dt` of the skinned vertices.
#[allow(clippy::too_many_arguments)]
pub fn render_frame(
    template: &BodyTemplate,
    params_now: &BodyParams,
    params_prev: &BodyParams,
    dt: f64,
    timestamp: f64,
    radar_origin: &Vector3<f64>,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<PointFrame, RadarError> {
    if template.n_vertices == 0 {
        return Err(RadarError::Contract(
            "template has no vertices to render".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(RadarError::Contract(format!(
            "dt must be positive, got {dt}"
        )));
    }
    noise.validate()?;
    let pose_now = template.pose_frame(
        params_now.theta_frame(0),
        params_now.beta_frame(0),
        params_now.gamma_frame(0),
    )?;
    let pose_prev = template.pose_frame(
        params_prev.theta_frame(0),
        params_prev.beta_frame(0),
        params_prev.gamma_frame(0),
    )?;
    let now = template.skin_frame(&pose_now, params_now.beta_frame(0));
    let prev = template.skin_frame(&pose_prev, params_prev.beta_frame(0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter =
        Normal::new(0.0, noise.position_jitter_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let doppler_noise =
        Normal::new(0.0, noise.doppler_noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let log_intensity =
        Normal::new(0.0, noise.intensity_log_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");

    let sample_jitter = |rng: &mut ChaCha8Rng| -> Vector3<f64> {
        if noise.position_jitter_sigma == 0.0 {
            return Vector3::zeros();
        }
        let d = Vector3::new(jitter.sample(rng), jitter.sample(rng), jitter.sample(rng));
        let cap = 2.0 * noise.position_jitter_sigma;
        if d.norm() > cap {
            d * (cap / d.norm())
        } else {
            d
        }
    };
    let doppler_err = |rng: &mut ChaCha8Rng| {
        if noise.doppler_noise_sigma == 0.0 {
            0.0
        } else {
            doppler_noise.sample(rng)
        }
    };
    let intensity = |rng: &mut ChaCha8Rng, p: &Vector3<f64>| {
        let r2 = (p - radar_origin).norm_squared().max(1e-6);
        let gain = if noise.intensity_log_sigma == 0.0 {
            1.0
        } else {
            log_intensity.sample(rng).exp()
        };
        gain / r2
    };

    let mut points: Vec<[f64; CHANNELS]> = Vec::new();
    let n_body = poisson(&mut rng, noise.body_points_per_frame);
    for _ in 0..n_body {
        let v = rng.random_range(0..template.n_vertices);
        let velocity = (now[v] - prev[v]) / dt;
        let p = now[v] + sample_jitter(&mut rng);
        let doppler = radial_velocity(&now[v], &velocity, radar_origin)? + doppler_err(&mut rng);
        let i = intensity(&mut rng, &p);
        points.push([p.x, p.y, p.z, doppler, i]);
        if noise.ghost_probability > 0.0 && rng.random::<f64>() < noise.ghost_probability {
            let plane = &noise.ghost_mirror_plane;
            let g = plane.reflect_point(&p);
            let gv = plane.reflect_vector(&velocity);
            let doppler = radial_velocity(&g, &gv, radar_origin)? + doppler_err(&mut rng);
            let i = intensity(&mut rng, &g) * noise.ghost_attenuation;
            points.push([g.x, g.y, g.z, doppler, i]);
        }
    }

    let region = &noise.clutter_region;
    for _ in 0..poisson(&mut rng, noise.clutter_points_per_frame) {
        let p = Vector3::from([0, 1, 2].map(|k| rng.random_range(region.min[k]..=region.max[k])));
        let doppler = doppler_err(&mut rng);
        let i = intensity(&mut rng, &p);
        points.push([p.x, p.y, p.z, doppler, i]);
    }

    points.shuffle(&mut rng);
    Ok(PointFrame {
        channels: CHANNELS,
        data: points.into_iter().flatten().collect(),
        timestamp,
    })
}
