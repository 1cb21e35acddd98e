//! Descent with Armijo backtracking and closed-form noise variances.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::likelihood::Problem;
use crate::error::{Error, Result};

/// How the search direction is formed from the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentDirection {
    /// Negative gradient.
    Steepest,
    /// Negative gradient preconditioned by the damped Gauss-Newton
    /// curvature. Falls back to the negative gradient if the solve fails.
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    /// Fraction of the predicted linear decrease that must be achieved.
    pub c: f64,
    /// Step multiplier applied after each rejected trial.
    pub shrink: f64,
    pub step_init: f64,
    pub min_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { c: 1e-4, shrink: 0.5, step_init: 1.0, min_step: 1e-12 }
    }
}

/// Largest `step_init * shrink^k` meeting `f(x + t d) <= f(x) + c t <g, d>`.
///
/// Returns the accepted step and the objective there. Trial points where
/// `f` is not finite are rejected.
pub fn backtracking_step<F>(
    x: &[f64],
    fx: f64,
    grad: &[f64],
    direction: &[f64],
    mut f: F,
    ls: &LineSearch,
) -> Result<(f64, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    let slope: f64 = grad.iter().zip(direction).map(|(g, d)| g * d).sum();
    if !(slope < 0.0) {
        return Err(Error::NotDescentDirection(slope));
    }
    let mut t = ls.step_init;
    let mut trial = vec![0.0; x.len()];
    while t >= ls.min_step {
        for ((xt, xi), di) in trial.iter_mut().zip(x).zip(direction) {
            *xt = xi + t * di;
        }
        let ft = f(&trial);
        if ft <= fx + ls.c * t * slope {
            return Ok((t, ft));
        }
        t *= ls.shrink;
    }
    Err(Error::StepUnderflow { min_step: ls.min_step })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DescentSettings {
    pub direction: DescentDirection,
    pub line_search: LineSearch,
    pub max_iters: usize,
    pub grad_tolerance: f64,
    pub sigma2_floor: f64,
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome {
    pub params: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting from the initial point.
    pub trace: Vec<f64>,
}

/// Minimize the negative log-likelihood of `problem` from `params`.
///
/// Each iteration takes one line-searched step with the variances held
/// fixed, then re-solves the variances in closed form at the new point.
/// Stops when `-<g, d>` (the squared gradient norm in the metric of the
/// chosen preconditioner) falls below `grad_tolerance * max(1, |f|)`.
pub(crate) fn minimize(
    problem: &Problem<'_>,
    mut params: Vec<f64>,
    sigma2_init: &[f64],
    settings: &DescentSettings,
) -> Result<DescentOutcome> {
    let floor = settings.sigma2_floor;
    let mut sigma2: Vec<f64> = sigma2_init.iter().map(|v| v.max(floor)).collect();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    // Levenberg damping grows when full steps are rejected and relaxes
    // when they are accepted, so curved valleys do not stall the descent.
    let mut damping = settings.damping;
    let mut eval = problem.evaluate(&params, &sigma2)?;
    trace.push(eval.nll);
    while iterations < settings.max_iters {
        let direction = search_direction(&eval, settings.direction, damping);
        let decrement = -eval.gradient.dot(&direction);
        if !decrement.is_finite() {
            break;
        }
        let scale = eval.nll.abs().max(1.0);
        if decrement <= settings.grad_tolerance * scale {
            converged = true;
            break;
        }

        let step = backtracking_step(
            &params,
            eval.nll,
            eval.gradient.as_slice(),
            direction.as_slice(),
            |p| problem.nll(p, &sigma2).unwrap_or(f64::INFINITY),
            &settings.line_search,
        );
        let (t, _) = match step {
            Ok(s) => s,
            Err(_) => {
                // no representable decrease left along the direction
                converged = decrement <= settings.grad_tolerance.sqrt() * scale;
                break;
            }
        };
        for (p, d) in params.iter_mut().zip(direction.iter()) {
            *p += t * d;
        }
        iterations += 1;
        if settings.direction == DescentDirection::GaussNewton {
            damping = if t >= settings.line_search.step_init {
                (damping / 3.0).max(settings.damping)
            } else {
                (damping.max(1e-6) * 4.0).min(MAX_DAMPING)
            };
        }

        sigma2 = problem.profile_variances(&params, floor)?;
        eval = problem.evaluate(&params, &sigma2)?;
        trace.push(eval.nll);
    }

    Ok(DescentOutcome { nll: eval.nll, params, sigma2, iterations, converged, trace })
}

const MAX_DAMPING: f64 = 1e8;

fn search_direction(
    eval: &super::likelihood::Evaluation,
    direction: DescentDirection,
    damping: f64,
) -> DVector<f64> {
    let steepest = -&eval.gradient;
    match direction {
        DescentDirection::Steepest => steepest,
        DescentDirection::GaussNewton => {
            let mut h = eval.curvature.clone();
            let max_diag = h.diagonal().amax().max(f64::MIN_POSITIVE);
            for i in 0..h.nrows() {
                h[(i, i)] += damping * h[(i, i)] + 1e-14 * max_diag;
            }
            match h.cholesky() {
                Some(chol) => {
                    let d = chol.solve(&steepest);
                    if d.iter().all(|v| v.is_finite()) && d.dot(&eval.gradient) < 0.0 {
                        d
                    } else {
                        steepest
                    }
                }
                None => steepest,
            }
        }
    }
}
