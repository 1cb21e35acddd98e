//! AGC and mean-C/N0 measurement synthesis, quiet baselines and detection.
//!
//! Both measurement kinds share one deterministic model: the jammer lowers
//! the reported level by `10 log10(zeta * d^-alpha + 1)` dB below the quiet
//! level. For C/N0 the noise is drawn per satellite and averaged, so the
//! effective variance of the mean is the per-satellite variance over the
//! number of satellites.

use std::f64::consts::LN_10;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{ScenarioConfig, ScenarioTruth, Vec3, MIN_JAMMER_DISTANCE_M};

/// Default detection threshold relative to the quiet level, dB.
pub const DEFAULT_DETECTION_THRESHOLD_DB: f64 = -5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    Agc,
    Cnir,
}

impl std::str::FromStr for MeasurementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "agc" => Ok(MeasurementKind::Agc),
            "cnir" | "cn0" => Ok(MeasurementKind::Cnir),
            other => Err(Error::InvalidConfig(format!("unknown measurement kind '{other}'"))),
        }
    }
}

/// One receiver's jammed-half observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSeries {
    /// Index into the originating scenario.
    pub id: usize,
    /// Position at scenario start.
    pub start: Vec3,
    pub positions: Vec<Vec3>,
    /// Observed level per sample, dB.
    pub values: Vec<f64>,
    /// Quiet (unjammed) level, dB.
    pub quiet_db: f64,
    /// Variance of the quiet-phase samples, dB^2.
    pub quiet_variance: f64,
    /// Noise variance used in synthesis; bookkeeping only.
    pub noise_var_true: f64,
}

impl ReceiverSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean_position(&self) -> Option<Vec3> {
        Vec3::mean(&self.positions)
    }

    pub fn is_jammed(&self, threshold_db: f64) -> bool {
        detect_jammed(&self.values, self.quiet_db, threshold_db)
    }

    /// Shift every observed value and the quiet level by `offset` dB.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + offset).collect(),
            quiet_db: self.quiet_db + offset,
            ..self.clone()
        }
    }
}

/// Per-receiver measurement time series over the jammed half of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub kind: MeasurementKind,
    /// Sample times shared by all receivers, s.
    pub times: Vec<f64>,
    pub receivers: Vec<ReceiverSeries>,
}

impl MeasurementSet {
    pub fn validate(&self) -> Result<()> {
        for r in &self.receivers {
            if r.values.len() != self.times.len() || r.positions.len() != self.times.len() {
                return Err(Error::InvalidConfig(format!(
                    "receiver {}: {} values and {} positions for {} sample times",
                    r.id,
                    r.values.len(),
                    r.positions.len(),
                    self.times.len()
                )));
            }
            if !r.quiet_db.is_finite()
                || r.values.iter().any(|v| !v.is_finite())
                || r.positions.iter().any(|p| !p.is_finite())
            {
                return Err(Error::InvalidConfig(format!("receiver {}: non-finite data", r.id)));
            }
        }
        Ok(())
    }

    /// Indices of receivers whose level drops to `threshold_db` below quiet.
    pub fn jammed_receivers(&self, threshold_db: f64) -> Vec<usize> {
        (0..self.receivers.len())
            .filter(|&i| self.receivers[i].is_jammed(threshold_db))
            .collect()
    }

    /// Write one row per (time, receiver): `time,receiver,x,y,z,value_db`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            time: f64,
            receiver: usize,
            x: f64,
            y: f64,
            z: f64,
            value_db: f64,
        }
        let mut w = csv::Writer::from_writer(writer);
        for (n, &time) in self.times.iter().enumerate() {
            for r in &self.receivers {
                let p = r.positions[n];
                w.serialize(Row { time, receiver: r.id, x: p.x, y: p.y, z: p.z, value_db: r.values[n] })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn distance(p0: Vec3, p: Vec3) -> f64 {
    (p0 - p).norm()
}

/// Suppression `10 log10(zeta * d^-alpha + 1)` in dB.
pub fn jamming_drop_db(zeta: f64, alpha: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    Ok(10.0 * (zeta * d.powf(-alpha)).ln_1p() / LN_10)
}

/// AGC level in dB for a receiver `d` meters from the jammer.
pub fn agc_sample(quiet_db: f64, zeta: f64, alpha: f64, d: f64, noise_db: f64) -> Result<f64> {
    Ok(quiet_db - jamming_drop_db(zeta, alpha, d)? + noise_db)
}

/// Mean C/N0 in dB over satellites, each carrying its own noise term.
pub fn cnir_sample(
    quiet_db: f64,
    zeta: f64,
    alpha: f64,
    d: f64,
    per_sat_noise_db: &[f64],
) -> Result<f64> {
    if per_sat_noise_db.is_empty() {
        return Err(Error::EmptyInput("satellite noise list"));
    }
    let level = quiet_db - jamming_drop_db(zeta, alpha, d)?;
    let sum: f64 = per_sat_noise_db.iter().map(|w| level + w).sum();
    Ok(sum / per_sat_noise_db.len() as f64)
}

pub fn estimate_quiet_baseline(first_half_values: &[f64]) -> Result<f64> {
    if first_half_values.is_empty() {
        return Err(Error::EmptyInput("quiet-phase samples"));
    }
    Ok(first_half_values.iter().sum::<f64>() / first_half_values.len() as f64)
}

/// Jammed iff the lowest sample is at least `|threshold_db|` below quiet
/// (a drop of exactly the threshold counts).
pub fn detect_jammed(series: &[f64], quiet_db: f64, threshold_db: f64) -> bool {
    series
        .iter()
        .copied()
        .reduce(f64::min)
        .is_some_and(|min| min - quiet_db <= threshold_db)
}

/// Seeded generator used for measurement noise.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Synthesize measurements with noise seeded from `config.rng_seed`.
pub fn synthesize(
    truth: &ScenarioTruth,
    config: &ScenarioConfig,
    kind: MeasurementKind,
) -> Result<MeasurementSet> {
    synthesize_with_rng(truth, config, kind, &mut noise_rng(config.rng_seed))
}

pub fn synthesize_with_rng<R: Rng + ?Sized>(
    truth: &ScenarioTruth,
    config: &ScenarioConfig,
    kind: MeasurementKind,
    rng: &mut R,
) -> Result<MeasurementSet> {
    config.validate()?;
    let on = config.jammer_on_index();
    let all_times = config.sample_times();
    let n_sat = config.n_satellites;
    let mut sat_noise = vec![0.0; n_sat];

    let mut receivers = Vec::with_capacity(truth.n_receivers());
    for (id, traj) in truth.trajectories.iter().enumerate() {
        let (quiet, noise_var) = match kind {
            MeasurementKind::Agc => (truth.quiet_agc_db[id], truth.agc_noise_var[id]),
            MeasurementKind::Cnir => (truth.quiet_cnir_db[id], truth.cnir_noise_var[id]),
        };
        let sd = noise_var.sqrt();
        let zeta = truth.zeta[id];
        let alpha = truth.alpha[id];

        let mut quiet_samples = Vec::with_capacity(on);
        let mut values = Vec::with_capacity(all_times.len() - on);
        let mut positions = Vec::with_capacity(all_times.len() - on);
        for (k, &t) in all_times.iter().enumerate() {
            let p = traj.position_at(t);
            let d = distance(truth.jammer_pos, p);
            if d < MIN_JAMMER_DISTANCE_M {
                return Err(Error::SingularDistance { receiver: id, distance: d });
            }
            let z = if k < on { 0.0 } else { zeta };
            let v = match kind {
                MeasurementKind::Agc => {
                    let w: f64 = rng.sample(StandardNormal);
                    agc_sample(quiet, z, alpha, d, sd * w)?
                }
                MeasurementKind::Cnir => {
                    for w in sat_noise.iter_mut() {
                        *w = sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    cnir_sample(quiet, z, alpha, d, &sat_noise)?
                }
            };
            if k < on {
                quiet_samples.push(v);
            } else {
                values.push(v);
                positions.push(p);
            }
        }

        let quiet_db = estimate_quiet_baseline(&quiet_samples)?;
        let quiet_variance = quiet_samples.iter().map(|v| (v - quiet_db).powi(2)).sum::<f64>()
            / quiet_samples.len() as f64;
        let noise_var_true = match kind {
            MeasurementKind::Agc => noise_var,
            MeasurementKind::Cnir => noise_var / n_sat as f64,
        };
        receivers.push(ReceiverSeries {
            id,
            start: traj.start,
            positions,
            values,
            quiet_db,
            quiet_variance,
            noise_var_true,
        });
    }

    Ok(MeasurementSet { kind, times: all_times[on..].to_vec(), receivers })
}
