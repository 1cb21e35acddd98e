//! Monte Carlo sweeps comparing the estimator with the baselines.
//!
//! Every trial draws its scenario and noise from a seed derived from the
//! master seed and the trial index only. The same trial index therefore
//! sees the same receivers and the same standard-normal noise draws at
//! every sweep value, and results do not depend on how trials are scheduled
//! across threads.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{centroid_estimate, ls_estimate, ReceiverPosition};
use crate::channel::{synthesize, MeasurementKind};
use crate::error::{Error, Result};
use crate::estimator::{joint_estimate, EstimatorConfig};
use crate::scenario::{generate_scenario, Geometry, ScenarioConfig, Vec3};

pub use crate::report::Method;

/// Trial count used when none is given.
pub const DEFAULT_TRIALS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    /// Number of receivers, uniform cube.
    ReceiverSweep,
    /// Number of receivers on a road beside the jammer; horizontal error.
    RoadSweep,
    /// Measurement noise variance.
    NoiseSweep,
    /// Initial `zeta` of the exponent search.
    ZetaInitSweep,
    /// Number of receivers with C/N0 measurements.
    CnirReceiverSweep,
    /// Per-satellite C/N0 noise variance.
    CnirNoiseSweep,
}

impl SweepFamily {
    pub const ALL: [SweepFamily; 6] = [
        SweepFamily::ReceiverSweep,
        SweepFamily::RoadSweep,
        SweepFamily::NoiseSweep,
        SweepFamily::ZetaInitSweep,
        SweepFamily::CnirReceiverSweep,
        SweepFamily::CnirNoiseSweep,
    ];

    pub fn default_kind(self) -> MeasurementKind {
        match self {
            SweepFamily::CnirReceiverSweep | SweepFamily::CnirNoiseSweep => MeasurementKind::Cnir,
            _ => MeasurementKind::Agc,
        }
    }

    pub fn metric(self) -> ErrorMetric {
        match self {
            SweepFamily::RoadSweep => ErrorMetric::Horizontal,
            _ => ErrorMetric::ThreeD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    ThreeD,
    /// Ignores elevation.
    Horizontal,
}

impl ErrorMetric {
    pub fn error(self, estimate: Vec3, truth: Vec3) -> f64 {
        let diff = estimate - truth;
        match self {
            ErrorMetric::ThreeD => diff.norm(),
            ErrorMetric::Horizontal => diff.norm_2d(),
        }
    }
}

pub fn receiver_counts() -> Vec<f64> {
    vec![3.0, 5.0, 7.0, 10.0, 12.0, 15.0, 18.0, 21.0, 25.0, 30.0]
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: SweepFamily,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub base: ScenarioConfig,
    pub estimator: EstimatorConfig,
    pub methods: Vec<Method>,
    pub kind: MeasurementKind,
    pub master_seed: u64,
}

impl SweepSpec {
    /// Standard sweep values, receiver counts and methods for a family.
    pub fn standard(family: SweepFamily) -> Self {
        let mut base = ScenarioConfig::default();
        let mut methods = Method::ALL.to_vec();
        let sweep_values = match family {
            SweepFamily::ReceiverSweep | SweepFamily::CnirReceiverSweep => receiver_counts(),
            SweepFamily::RoadSweep => {
                base.geometry = Geometry::road();
                receiver_counts()
            }
            SweepFamily::NoiseSweep => {
                base.n_receivers = 7;
                linspace(0.1, 3.0, 10)
            }
            SweepFamily::ZetaInitSweep => {
                base.n_receivers = 7;
                methods = vec![Method::Proposed];
                [7.0, 7.5, 8.0, 8.5, 9.0].iter().map(|e: &f64| 10f64.powf(*e)).collect()
            }
            SweepFamily::CnirNoiseSweep => {
                base.n_receivers = 7;
                linspace(1.0, 5.0, 5)
            }
        };
        Self {
            family,
            sweep_values,
            trials: DEFAULT_TRIALS,
            base,
            estimator: EstimatorConfig::default(),
            methods,
            kind: family.default_kind(),
            master_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::InvalidConfig("sweep_values must not be empty".into()));
        }
        for &v in &self.sweep_values {
            self.configure(v, 0)?;
        }
        Ok(())
    }

    /// Scenario and estimator settings for one sweep value and trial.
    pub fn configure(&self, value: f64, trial: usize) -> Result<(ScenarioConfig, EstimatorConfig)> {
        let mut scenario = self.base.clone();
        let mut estimator = self.estimator.clone();
        let count = || -> Result<usize> {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(Error::InvalidConfig(format!("receiver count must be an integer, got {value}")));
            }
            Ok(value as usize)
        };
        match self.family {
            SweepFamily::ReceiverSweep | SweepFamily::CnirReceiverSweep => {
                scenario.n_receivers = count()?;
            }
            SweepFamily::RoadSweep => {
                scenario.n_receivers = count()?;
                if !matches!(scenario.geometry, Geometry::RoadLine { .. }) {
                    scenario.geometry = Geometry::road();
                }
            }
            SweepFamily::NoiseSweep | SweepFamily::CnirNoiseSweep => match self.kind {
                MeasurementKind::Agc => scenario.agc_noise_var = value,
                MeasurementKind::Cnir => scenario.cnir_noise_var = value,
            },
            SweepFamily::ZetaInitSweep => estimator.zeta_init = value,
        }
        scenario.rng_seed = trial_seed(self.master_seed, trial as u64);
        scenario.validate()?;
        estimator.validate()?;
        Ok((scenario, estimator))
    }
}

/// SplitMix64 finalizer over the master seed and trial index.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(trial)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Error of each requested method for one trial; `None` marks a failure.
pub fn run_trial(
    scenario: &ScenarioConfig,
    estimator: &EstimatorConfig,
    kind: MeasurementKind,
    methods: &[Method],
    metric: ErrorMetric,
) -> Vec<Option<f64>> {
    let Ok(truth) = generate_scenario(scenario) else {
        return vec![None; methods.len()];
    };
    let Ok(meas) = synthesize(&truth, scenario, kind) else {
        return vec![None; methods.len()];
    };
    let threshold = estimator.detection_threshold_db;
    methods
        .iter()
        .map(|m| {
            let position = match m {
                Method::Proposed => joint_estimate(&meas, estimator)
                    .ok()
                    .filter(|e| e.converged)
                    .map(|e| e.p0_hat),
                Method::Centroid => centroid_estimate(&meas, threshold, ReceiverPosition::Start).ok(),
                Method::Ls => ls_estimate(&meas, &truth.zeta, threshold).ok(),
            };
            position.map(|p| metric.error(p, truth.jammer_pos))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub method: Method,
    pub n_trials: usize,
    pub n_failures: usize,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    /// Per-trial error in trial order, `None` for failures.
    pub errors: Vec<Option<f64>>,
}

impl SweepRow {
    fn from_errors(value: f64, method: Method, errors: Vec<Option<f64>>) -> Self {
        let mut ok: Vec<f64> = errors.iter().flatten().copied().collect();
        ok.sort_by(f64::total_cmp);
        Self {
            value,
            method,
            n_trials: errors.len(),
            n_failures: errors.len() - ok.len(),
            p25: percentile(&ok, 0.25),
            median: percentile(&ok, 0.5),
            p75: percentile(&ok, 0.75),
            errors,
        }
    }

    pub fn failure_rate(&self) -> f64 {
        self.n_failures as f64 / self.n_trials as f64
    }

    pub fn successes(&self) -> impl Iterator<Item = f64> + '_ {
        self.errors.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub family: SweepFamily,
    pub kind: MeasurementKind,
    pub metric: ErrorMetric,
    /// Ordered by sweep value, then by method as listed in the spec.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, value: f64, method: Method) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value && r.method == method)
    }

    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &SweepRow> + '_ {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

/// Percentile `q` in `[0, 1]` of ascending `sorted` data, linear
/// interpolation between closest ranks. NaN for empty input.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let metric = spec.family.metric();
    let jobs: Vec<(usize, usize)> = (0..spec.sweep_values.len())
        .flat_map(|v| (0..spec.trials).map(move |t| (v, t)))
        .collect();
    let outcomes: Vec<Vec<Option<f64>>> = jobs
        .par_iter()
        .map(|&(v, t)| {
            let (scenario, estimator) = spec.configure(spec.sweep_values[v], t)?;
            Ok(run_trial(&scenario, &estimator, spec.kind, &spec.methods, metric))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(spec.sweep_values.len() * spec.methods.len());
    for (v, &value) in spec.sweep_values.iter().enumerate() {
        let block = &outcomes[v * spec.trials..(v + 1) * spec.trials];
        for (k, &method) in spec.methods.iter().enumerate() {
            let errors = block.iter().map(|o| o[k]).collect();
            rows.push(SweepRow::from_errors(value, method, errors));
        }
    }
    Ok(SweepResult { family: spec.family, kind: spec.kind, metric, rows })
}

pub const CSV_HEADER: [&str; 7] = ["value", "method", "n_trials", "n_failures", "p25", "median", "p75"];

pub fn write_csv<W: Write>(result: &SweepResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.value.to_string(),
            r.method.to_string(),
            r.n_trials.to_string(),
            r.n_failures.to_string(),
            r.p25.to_string(),
            r.median.to_string(),
            r.p75.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(result, std::io::BufWriter::new(file))
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
