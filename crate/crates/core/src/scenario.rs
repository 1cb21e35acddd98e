//! Ground-truth geometry and channel parameters for synthetic experiments.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// GPS L1 carrier frequency, Hz.
pub const L1_FREQUENCY_HZ: f64 = 1_575.42e6;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reference noise temperature, K.
pub const NOISE_TEMPERATURE_K: f64 = 290.0;
/// Front-end noise bandwidth, Hz.
pub const NOISE_BANDWIDTH_HZ: f64 = 2.0e6;

/// Closest distance a receiver may come to the jammer during a scenario.
pub const MIN_JAMMER_DISTANCE_M: f64 = 1.0;

/// Quiet AGC level assigned to every receiver (relative scale).
pub const QUIET_AGC_DB: f64 = 0.0;
/// Quiet mean C/N0 assigned to every receiver, dB-Hz.
pub const QUIET_CNIR_DB: f64 = 45.0;

const MAX_REDRAWS: usize = 10_000;

/// Cartesian position or direction in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Length of the horizontal (x, y) component.
    pub fn norm_2d(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Arithmetic mean of a set of points, `None` when empty.
    pub fn mean<'a, I: IntoIterator<Item = &'a Vec3>>(points: I) -> Option<Vec3> {
        let mut sum = Vec3::ZERO;
        let mut n = 0usize;
        for p in points {
            sum += *p;
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Straight-line constant-speed receiver motion sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: Vec3,
    /// Unit direction of travel.
    pub heading: Vec3,
    /// m/s
    pub speed: f64,
    /// Time at which the receiver leaves `start`; it waits there before.
    #[serde(default)]
    pub departure: f64,
    /// Strictly increasing sample times in seconds.
    pub sample_times: Vec<f64>,
}

impl Trajectory {
    pub fn position_at(&self, t: f64) -> Vec3 {
        position_at(self, t)
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.sample_times.iter().map(move |&t| self.position_at(t))
    }

    /// Smallest distance between `point` and the path over `[0, t_end]`.
    pub fn closest_approach(&self, point: Vec3, t_end: f64) -> f64 {
        let travel = (t_end - self.departure).max(0.0);
        let t = if self.speed > 0.0 {
            let along = (point - self.start).dot(self.heading) / self.speed;
            along.clamp(0.0, travel)
        } else {
            0.0
        };
        (self.position_at(self.departure + t) - point).norm()
    }
}

/// Receiver position at time `t` seconds after the scenario start.
pub fn position_at(traj: &Trajectory, t: f64) -> Vec3 {
    traj.start + traj.heading * (traj.speed * (t - traj.departure).max(0.0))
}

/// When receivers leave their start positions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Departure {
    /// At time zero: receivers are already under way when jamming begins.
    ScenarioStart,
    /// When the jammer switches on: receivers wait at their start positions
    /// through the quiet half and are observed moving away from them.
    #[default]
    JammerOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Geometry {
    /// Starts uniform in a cube centered on the jammer, headings uniform on the sphere.
    UniformCube,
    /// Receivers on a north-south road `offset_east` meters east of the jammer,
    /// at the jammer's elevation.
    RoadLine { offset_east: f64 },
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry::UniformCube
    }
}

impl Geometry {
    pub fn road() -> Self {
        Geometry::RoadLine { offset_east: 500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_receivers: usize,
    /// Side of the start-position cube, also the length of the road segment (m).
    pub cube_side: f64,
    pub geometry: Geometry,
    /// m/s
    pub speed: f64,
    /// Total scenario length in seconds; the jammer switches on at the midpoint.
    pub duration: f64,
    pub departure: Departure,
    /// Samples in each half of the scenario.
    pub samples_per_half: usize,
    /// W
    pub jammer_power: f64,
    pub alpha_base: f64,
    pub alpha_halfnormal_scale: f64,
    /// dB^2
    pub agc_noise_var: f64,
    /// Per-satellite C/N0 noise variance, dB^2.
    pub cnir_noise_var: f64,
    pub n_satellites: usize,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_receivers: 10,
            cube_side: 2000.0,
            geometry: Geometry::UniformCube,
            speed: 1.5,
            duration: 3000.0,
            departure: Departure::JammerOn,
            samples_per_half: 200,
            jammer_power: 0.01,
            alpha_base: 2.0,
            alpha_halfnormal_scale: 0.1,
            agc_noise_var: 0.1,
            cnir_noise_var: 1.0,
            n_satellites: 8,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_receivers < 3 {
            return bad(format!("n_receivers must be >= 3, got {}", self.n_receivers));
        }
        let positive = [
            ("cube_side", self.cube_side),
            ("duration", self.duration),
            ("alpha_base", self.alpha_base),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("speed", self.speed),
            ("jammer_power", self.jammer_power),
            ("alpha_halfnormal_scale", self.alpha_halfnormal_scale),
            ("agc_noise_var", self.agc_noise_var),
            ("cnir_noise_var", self.cnir_noise_var),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.samples_per_half == 0 {
            return bad("samples_per_half must be >= 1".into());
        }
        if self.n_satellites == 0 {
            return bad("n_satellites must be >= 1".into());
        }
        if let Geometry::RoadLine { offset_east } = self.geometry {
            if !offset_east.is_finite() || offset_east.abs() < MIN_JAMMER_DISTANCE_M {
                return bad(format!("road offset must be at least {MIN_JAMMER_DISTANCE_M} m"));
            }
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        2 * self.samples_per_half
    }

    pub fn sample_interval(&self) -> f64 {
        self.duration / self.total_samples() as f64
    }

    /// Uniform grid `k * dt`, `k = 0 .. 2 * samples_per_half`.
    pub fn sample_times(&self) -> Vec<f64> {
        let dt = self.sample_interval();
        (0..self.total_samples()).map(|k| k as f64 * dt).collect()
    }

    /// Index of the first sample with the jammer on.
    pub fn jammer_on_index(&self) -> usize {
        self.samples_per_half
    }

    pub fn jammer_on_time(&self) -> f64 {
        self.jammer_on_index() as f64 * self.sample_interval()
    }

    /// Time at which receivers start moving.
    pub fn departure_time(&self) -> f64 {
        match self.departure {
            Departure::ScenarioStart => 0.0,
            Departure::JammerOn => self.jammer_on_time(),
        }
    }
}

/// Free-space channel constant `(c / (4 pi f_L1))^2`.
pub fn free_space_constant() -> f64 {
    let wavelength = SPEED_OF_LIGHT / L1_FREQUENCY_HZ;
    (wavelength / (4.0 * std::f64::consts::PI)).powi(2)
}

/// Thermal noise power `k T0 B` in watts.
pub fn thermal_noise_power() -> f64 {
    BOLTZMANN * NOISE_TEMPERATURE_K * NOISE_BANDWIDTH_HZ
}

/// Jamming-to-noise ratio at unit distance for a jammer of `power` watts.
pub fn zeta_from_power(power: f64) -> f64 {
    power * free_space_constant() / thermal_noise_power()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub jammer_pos: Vec3,
    /// Linear jamming-to-noise ratio at 1 m, per receiver.
    pub zeta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub quiet_agc_db: Vec<f64>,
    pub quiet_cnir_db: Vec<f64>,
    pub agc_noise_var: Vec<f64>,
    pub cnir_noise_var: Vec<f64>,
}

impl ScenarioTruth {
    pub fn n_receivers(&self) -> usize {
        self.trajectories.len()
    }
}

/// Seeded generator used for scenario geometry.
pub fn geometry_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Draw a scenario from `config`, seeded by `config.rng_seed`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<ScenarioTruth> {
    generate_scenario_with_rng(config, &mut geometry_rng(config.rng_seed))
}

pub fn generate_scenario_with_rng<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<ScenarioTruth> {
    config.validate()?;
    let jammer_pos = Vec3::ZERO;
    let times = config.sample_times();
    let zeta = zeta_from_power(config.jammer_power);
    let n = config.n_receivers;

    let mut trajectories = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    for receiver in 0..n {
        let traj = draw_trajectory(config, jammer_pos, &times, rng)
            .ok_or(Error::SingularDistance { receiver, distance: 0.0 })?;
        trajectories.push(traj);
        let draw: f64 = rng.sample(StandardNormal);
        alpha.push(config.alpha_base + (config.alpha_halfnormal_scale * draw).abs());
    }

    Ok(ScenarioTruth {
        jammer_pos,
        zeta: vec![zeta; n],
        alpha,
        trajectories,
        quiet_agc_db: vec![QUIET_AGC_DB; n],
        quiet_cnir_db: vec![QUIET_CNIR_DB; n],
        agc_noise_var: vec![config.agc_noise_var; n],
        cnir_noise_var: vec![config.cnir_noise_var; n],
    })
}

fn draw_trajectory<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    jammer: Vec3,
    times: &[f64],
    rng: &mut R,
) -> Option<Trajectory> {
    let half = config.cube_side / 2.0;
    for _ in 0..MAX_REDRAWS {
        let (start, heading) = match config.geometry {
            Geometry::UniformCube => {
                let start = Vec3::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                );
                let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
                (jammer + start, Vec3::new(x, y, z))
            }
            Geometry::RoadLine { offset_east } => {
                let north = rng.random_range(-half..half);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (
                    jammer + Vec3::new(offset_east, north, 0.0),
                    Vec3::new(0.0, sign, 0.0),
                )
            }
        };
        let traj = Trajectory {
            start,
            heading,
            speed: config.speed,
            departure: config.departure_time(),
            sample_times: times.to_vec(),
        };
        if traj.closest_approach(jammer, config.duration) >= MIN_JAMMER_DISTANCE_M {
            return Some(traj);
        }
    }
    None
}
