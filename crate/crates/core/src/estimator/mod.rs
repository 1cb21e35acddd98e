//! Maximum-likelihood jammer position estimation with unknown path loss.
//!
//! The pipeline:
//!
//! 1. keep receivers whose level drops at least 5 dB below quiet,
//! 2. pick an exponent per receiver from a grid by likelihood, with the
//!    jammer position either shared across receivers or free per receiver
//!    (see [`AlphaSearch`]),
//! 3. keep receivers whose exponent is at most 2.3 (near free space),
//! 4. fit the jammer position and one `zeta` per kept receiver jointly,
//!    exponents fixed, noise variances re-solved in closed form after every
//!    descent step.

mod descent;
mod likelihood;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{MeasurementSet, DEFAULT_DETECTION_THRESHOLD_DB};
use crate::error::{Error, Result};
use crate::scenario::Vec3;

pub use descent::{backtracking_step, DescentDirection, LineSearch};
pub use likelihood::{neg_log_likelihood, nll_gradient, residuals, sigma2_closed_form};

use descent::{minimize, DescentOutcome, DescentSettings};
use likelihood::{FixedPositionFit, Problem};

/// Where the jammer position comes from while exponents are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSearch {
    /// Each receiver is fitted alone with its own free jammer position.
    PerReceiver,
    /// All jammed receivers are first fitted jointly at the current
    /// exponents; each receiver's exponent is then searched with the jammer
    /// held at that shared position. Repeated `alpha_search_rounds` times,
    /// starting from `pilot_alpha` for every receiver.
    SharedPosition,
}

/// `1.60, 1.61, .., 4.00`
pub fn default_alpha_grid() -> Vec<f64> {
    (160..=400).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Candidate path loss exponents, ascending.
    pub alpha_grid: Vec<f64>,
    /// Receivers with an estimated exponent at or below this are kept.
    pub alpha_subset_threshold: f64,
    pub alpha_search: AlphaSearch,
    /// Exponent assumed for every receiver in the first shared fit.
    pub pilot_alpha: f64,
    pub alpha_search_rounds: usize,
    /// Starting `zeta` for the per-receiver exponent search.
    pub zeta_init: f64,
    pub max_iters: usize,
    /// Stop once the squared preconditioned gradient norm is below
    /// `grad_tolerance * max(1, |nll|)`.
    pub grad_tolerance: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub step_init: f64,
    pub min_step: f64,
    pub direction: DescentDirection,
    /// Relative Levenberg damping added to the Gauss-Newton diagonal.
    pub damping: f64,
    /// Lower bound on the closed-form noise variance, dB^2.
    pub sigma2_floor: f64,
    /// Detection threshold relative to the quiet level, dB.
    pub detection_threshold_db: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            alpha_grid: default_alpha_grid(),
            alpha_subset_threshold: 2.3,
            alpha_search: AlphaSearch::SharedPosition,
            pilot_alpha: 2.0,
            alpha_search_rounds: 50,
            zeta_init: 1e8,
            max_iters: 5000,
            grad_tolerance: 1e-6,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            step_init: 1.0,
            min_step: 1e-12,
            direction: DescentDirection::GaussNewton,
            damping: 1e-6,
            sigma2_floor: 1e-12,
            detection_threshold_db: DEFAULT_DETECTION_THRESHOLD_DB,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.alpha_grid.is_empty() {
            return bad("alpha_grid must not be empty".into());
        }
        if self.alpha_grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return bad("alpha_grid entries must be positive".into());
        }
        if self.alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("alpha_grid must be strictly ascending".into());
        }
        for (name, v) in [
            ("alpha_subset_threshold", self.alpha_subset_threshold),
            ("pilot_alpha", self.pilot_alpha),
            ("zeta_init", self.zeta_init),
            ("grad_tolerance", self.grad_tolerance),
            ("step_init", self.step_init),
            ("min_step", self.min_step),
            ("sigma2_floor", self.sigma2_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("armijo_c", self.armijo_c), ("armijo_shrink", self.armijo_shrink)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return bad(format!("damping must be non-negative, got {}", self.damping));
        }
        if self.alpha_search_rounds == 0 {
            return bad("alpha_search_rounds must be >= 1".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if !self.detection_threshold_db.is_finite() {
            return bad("detection_threshold_db must be finite".into());
        }
        Ok(())
    }

    fn settings(&self) -> DescentSettings {
        DescentSettings {
            direction: self.direction,
            line_search: LineSearch {
                c: self.armijo_c,
                shrink: self.armijo_shrink,
                step_init: self.step_init,
                min_step: self.min_step,
            },
            max_iters: self.max_iters,
            grad_tolerance: self.grad_tolerance,
            sigma2_floor: self.sigma2_floor,
            damping: self.damping,
        }
    }
}

/// Nuisance parameters of the receivers used in the joint fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceState {
    pub zeta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// Outcome of the exponent grid search for one receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub receiver: usize,
    pub alpha: f64,
    pub zeta: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub p0_hat: Vec3,
    /// Indices into the measurement set's receivers, aligned with `nuisance`.
    pub selected: Vec<usize>,
    pub nuisance: NuisanceState,
    /// Exponent search results for every jammed receiver that produced one.
    pub alpha_fits: Vec<AlphaFit>,
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean start position of the receivers in `indices`.
pub fn initial_position(meas: &MeasurementSet, indices: &[usize]) -> Option<Vec3> {
    Vec3::mean(indices.iter().map(|&i| &meas.receivers[i].start))
}

fn floored_quiet_variance(meas: &MeasurementSet, i: usize, floor: f64) -> f64 {
    meas.receivers[i].quiet_variance.max(floor)
}

fn fit_from(
    problem: &Problem<'_>,
    p0: Vec3,
    log_zeta: &[f64],
    sigma2: &[f64],
    config: &EstimatorConfig,
) -> Result<DescentOutcome> {
    let mut params = p0.to_array().to_vec();
    params.extend_from_slice(log_zeta);
    minimize(problem, params, sigma2, &config.settings())
}

/// Exponent grid search for receiver `receiver` alone.
///
/// The descent runs over the jammer position and `zeta` for every grid
/// value, starting at the mean start position of the jammed receivers and
/// `config.zeta_init`. The exponent with the lowest final negative
/// log-likelihood wins; ties go to the smaller exponent. This is the
/// [`AlphaSearch::PerReceiver`] search regardless of `config.alpha_search`.
pub fn alpha_single_receiver(
    meas: &MeasurementSet,
    receiver: usize,
    config: &EstimatorConfig,
) -> Result<AlphaFit> {
    config.validate()?;
    let series = meas
        .receivers
        .get(receiver)
        .ok_or_else(|| Error::InvalidConfig(format!("receiver index {receiver} out of range")))?;
    if !series.is_jammed(config.detection_threshold_db) {
        return Err(Error::UnusableReceiver(receiver));
    }
    let jammed = meas.jammed_receivers(config.detection_threshold_db);
    let p0 = initial_position(meas, &jammed).unwrap_or(series.start);
    alpha_search(meas, receiver, p0, config)
}

fn alpha_search(
    meas: &MeasurementSet,
    receiver: usize,
    p0: Vec3,
    config: &EstimatorConfig,
) -> Result<AlphaFit> {
    let series = &meas.receivers[receiver];
    let sigma2 = [floored_quiet_variance(meas, receiver, config.sigma2_floor)];
    let log_zeta = [config.zeta_init.ln()];
    pick_alpha(receiver, config, |alpha| {
        let problem = Problem::new(vec![series], vec![alpha]);
        let out = fit_from(&problem, p0, &log_zeta, &sigma2, config).ok()?;
        Some((out.params[3].exp(), out.nll))
    })
}

/// Exponent grid search for one receiver with the jammer held at `p0`.
///
/// `zeta` starts at `config.zeta_init` for the first grid value and at the
/// previous grid value's fit afterwards.
fn alpha_search_at(
    meas: &MeasurementSet,
    receiver: usize,
    p0: Vec3,
    config: &EstimatorConfig,
) -> Result<AlphaFit> {
    let fit = FixedPositionFit::new(&meas.receivers[receiver], p0)
        .map_err(|_| Error::UnusableReceiver(receiver))?;
    let ls = config.settings().line_search;
    let mut log_zeta = config.zeta_init.ln();
    pick_alpha(receiver, config, |alpha| {
        let (lz, ssr) = fit.fit(alpha, log_zeta, config.max_iters, &ls);
        if !(lz.is_finite() && ssr.is_finite()) {
            return None;
        }
        log_zeta = lz;
        Some((lz.exp(), fit.nll(ssr, config.sigma2_floor)))
    })
}

/// Refine `previous` after the jammer estimate moved to `p0`: step along the
/// grid from the previous exponent while the likelihood improves, moving to
/// the smaller exponent on ties.
fn alpha_walk_at(
    meas: &MeasurementSet,
    previous: &AlphaFit,
    p0: Vec3,
    config: &EstimatorConfig,
) -> Result<AlphaFit> {
    let receiver = previous.receiver;
    let fit = FixedPositionFit::new(&meas.receivers[receiver], p0)
        .map_err(|_| Error::UnusableReceiver(receiver))?;
    let ls = config.settings().line_search;
    let grid = &config.alpha_grid;
    let evaluate = |k: usize, log_zeta: f64| -> Option<AlphaFit> {
        let (lz, ssr) = fit.fit(grid[k], log_zeta, config.max_iters, &ls);
        let nll = fit.nll(ssr, config.sigma2_floor);
        (lz.is_finite() && nll.is_finite())
            .then(|| AlphaFit { receiver, alpha: grid[k], zeta: lz.exp(), nll })
    };

    let mut k = grid
        .iter()
        .position(|&a| a == previous.alpha)
        .ok_or(Error::UnusableReceiver(receiver))?;
    let mut best = evaluate(k, previous.zeta.ln()).ok_or(Error::UnusableReceiver(receiver))?;
    for (dir, better) in [(-1isize, (|c: f64, b: f64| c <= b) as fn(f64, f64) -> bool), (1, |c, b| c < b)] {
        loop {
            let Some(next) = k.checked_add_signed(dir).filter(|&j| j < grid.len()) else {
                break;
            };
            match evaluate(next, best.zeta.ln()) {
                Some(cand) if better(cand.nll, best.nll) => {
                    best = cand;
                    k = next;
                }
                _ => break,
            }
        }
        if best.alpha != previous.alpha {
            break;
        }
    }
    Ok(best)
}

/// Lowest-NLL exponent over the grid, ties to the smaller exponent. `fit`
/// returns `(zeta, nll)` for one exponent or `None` if the fit failed.
fn pick_alpha(
    receiver: usize,
    config: &EstimatorConfig,
    mut fit: impl FnMut(f64) -> Option<(f64, f64)>,
) -> Result<AlphaFit> {
    let mut best: Option<AlphaFit> = None;
    let mut worst_nll = f64::NEG_INFINITY;
    for &alpha in &config.alpha_grid {
        let Some((zeta, nll)) = fit(alpha) else {
            continue;
        };
        if !nll.is_finite() {
            continue;
        }
        worst_nll = worst_nll.max(nll);
        if best.as_ref().is_none_or(|b| nll < b.nll) {
            best = Some(AlphaFit { receiver, alpha, zeta, nll });
        }
    }
    let best = best.ok_or(Error::UnusableReceiver(receiver))?;
    let flat = config.alpha_grid.len() > 1
        && worst_nll - best.nll <= 1e-12 * best.nll.abs().max(1.0);
    if flat {
        return Err(Error::UnusableReceiver(receiver));
    }
    Ok(best)
}

/// Exponent fits for the receivers in `jammed`, in the same order, skipping
/// receivers whose search failed.
fn search_exponents(
    meas: &MeasurementSet,
    jammed: &[usize],
    p0_init: Vec3,
    config: &EstimatorConfig,
) -> Vec<AlphaFit> {
    let collect = |results: Vec<Result<AlphaFit>>| -> Vec<AlphaFit> {
        results.into_iter().filter_map(|r| r.ok()).collect()
    };
    if config.alpha_search == AlphaSearch::PerReceiver {
        return collect(jammed.par_iter().map(|&i| alpha_search(meas, i, p0_init, config)).collect());
    }

    let sigma2: Vec<f64> = jammed
        .iter()
        .map(|&i| floored_quiet_variance(meas, i, config.sigma2_floor))
        .collect();
    let mut alpha = vec![config.pilot_alpha; jammed.len()];
    let mut params = p0_init.to_array().to_vec();
    params.extend(std::iter::repeat_n(config.zeta_init.ln(), jammed.len()));
    let mut fits: Vec<AlphaFit> = Vec::new();
    for round in 0..config.alpha_search_rounds {
        let shared = Problem::from_subset(meas, jammed, &alpha)
            .and_then(|problem| minimize(&problem, params.clone(), &sigma2, &config.settings()));
        match shared {
            Ok(out) if out.params.iter().all(|v| v.is_finite()) => params = out.params,
            // keep the previous shared point; on the first round that is the
            // initial position
            _ => {}
        }
        let p0 = Vec3::from_slice(&params);
        fits = if round == 0 {
            collect(jammed.par_iter().map(|&i| alpha_search_at(meas, i, p0, config)).collect())
        } else {
            // receivers found unusable in the full scan stay out
            collect(fits.par_iter().map(|f| alpha_walk_at(meas, f, p0, config)).collect())
        };
        let next: Vec<f64> = jammed
            .iter()
            .map(|&i| fits.iter().find(|f| f.receiver == i).map_or(config.pilot_alpha, |f| f.alpha))
            .collect();
        if next == alpha {
            break;
        }
        alpha = next;
    }
    fits
}

/// Positions (into `alpha_hats`) of exponents at or below `threshold`.
///
/// When none qualifies the single smallest exponent is kept, so an estimate
/// is always produced for non-empty input.
pub fn select_subset(alpha_hats: &[f64], threshold: f64) -> Vec<usize> {
    let kept: Vec<usize> = (0..alpha_hats.len()).filter(|&i| alpha_hats[i] <= threshold).collect();
    if !kept.is_empty() || alpha_hats.is_empty() {
        return kept;
    }
    let smallest = (0..alpha_hats.len())
        .min_by(|&a, &b| alpha_hats[a].total_cmp(&alpha_hats[b]))
        .expect("non-empty");
    vec![smallest]
}

/// Outcome of [`joint_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFit {
    pub p0: Vec3,
    pub zeta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub nll: f64,
    pub iterations: usize,
    /// Stopped on the gradient tolerance with finite parameters.
    pub converged: bool,
    /// Objective after every accepted step, starting at the initial point.
    pub nll_trace: Vec<f64>,
}

/// Descent over the jammer position and `zeta` of the receivers in
/// `subset`, exponents `alpha` held fixed, starting from `p0_init` and
/// `zeta_init`. Noise variances start at the quiet-phase variances and are
/// re-solved in closed form after every step.
pub fn joint_fit(
    meas: &MeasurementSet,
    subset: &[usize],
    alpha: &[f64],
    p0_init: Vec3,
    zeta_init: &[f64],
    config: &EstimatorConfig,
) -> Result<JointFit> {
    config.validate()?;
    if subset.is_empty() {
        return Err(Error::EmptyInput("subset"));
    }
    if zeta_init.len() != subset.len() {
        return Err(Error::InvalidConfig(format!(
            "{} receivers but {} zeta values",
            subset.len(),
            zeta_init.len()
        )));
    }
    if let Some(z) = zeta_init.iter().find(|z| !(z.is_finite() && **z > 0.0)) {
        return Err(Error::InvalidConfig(format!("zeta must be positive, got {z}")));
    }
    let problem = Problem::from_subset(meas, subset, alpha)?;
    let sigma2: Vec<f64> = subset
        .iter()
        .map(|&i| floored_quiet_variance(meas, i, config.sigma2_floor))
        .collect();
    let log_zeta: Vec<f64> = zeta_init.iter().map(|z| z.ln()).collect();
    let out = fit_from(&problem, p0_init, &log_zeta, &sigma2, config)?;
    Ok(JointFit {
        p0: Vec3::from_slice(&out.params),
        zeta: out.params[3..].iter().map(|v| v.exp()).collect(),
        sigma2: out.sigma2,
        nll: out.nll,
        iterations: out.iterations,
        converged: out.converged && out.params.iter().all(|v| v.is_finite()),
        nll_trace: out.trace,
    })
}

/// Estimate the jammer position from every jammed receiver in `meas`.
pub fn joint_estimate(meas: &MeasurementSet, config: &EstimatorConfig) -> Result<PositionEstimate> {
    config.validate()?;
    meas.validate()?;
    let jammed = meas.jammed_receivers(config.detection_threshold_db);
    let p0_init = initial_position(meas, &jammed).ok_or(Error::NoJammedReceivers)?;

    let alpha_fits = search_exponents(meas, &jammed, p0_init, config);

    if alpha_fits.is_empty() {
        return Ok(PositionEstimate {
            p0_hat: p0_init,
            selected: Vec::new(),
            nuisance: NuisanceState { zeta: vec![], alpha: vec![], sigma2: vec![] },
            alpha_fits,
            nll: f64::NAN,
            iterations: 0,
            converged: false,
        });
    }

    let alpha_hats: Vec<f64> = alpha_fits.iter().map(|f| f.alpha).collect();
    let kept = select_subset(&alpha_hats, config.alpha_subset_threshold);
    let selected: Vec<usize> = kept.iter().map(|&k| alpha_fits[k].receiver).collect();
    let alpha: Vec<f64> = kept.iter().map(|&k| alpha_fits[k].alpha).collect();
    let zeta: Vec<f64> = kept.iter().map(|&k| alpha_fits[k].zeta).collect();

    let (p0_hat, nuisance, nll, iterations, converged) =
        match joint_fit(meas, &selected, &alpha, p0_init, &zeta, config) {
            Ok(fit) => (
                fit.p0,
                NuisanceState { zeta: fit.zeta, alpha, sigma2: fit.sigma2 },
                fit.nll,
                fit.iterations,
                fit.converged,
            ),
            Err(_) => {
                let sigma2 = selected
                    .iter()
                    .map(|&i| floored_quiet_variance(meas, i, config.sigma2_floor))
                    .collect();
                (p0_init, NuisanceState { zeta, alpha, sigma2 }, f64::NAN, 0, false)
            }
        };

    Ok(PositionEstimate { p0_hat, selected, nuisance, alpha_fits, nll, iterations, converged })
}
