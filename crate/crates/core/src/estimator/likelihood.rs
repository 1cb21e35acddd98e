//! Gaussian log-likelihood of dB-domain drop measurements.
//!
//! Residual for receiver `i` at sample `n`:
//!
//! ```text
//! r_i[n] = G_i[n] - Gq_i + 10 log10(zeta_i * d_i[n]^-alpha_i + 1)
//! ```
//!
//! `zeta_i` enters through `log zeta_i`, which keeps it positive and puts
//! values spanning several decades on a common footing.

use std::f64::consts::{LN_10, PI};

use nalgebra::{DMatrix, DVector};

use crate::channel::{MeasurementSet, ReceiverSeries};
use crate::error::{Error, Result};
use crate::scenario::Vec3;

use super::descent::LineSearch;

const DB_PER_NEPER: f64 = 10.0 / LN_10;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Likelihood restricted to a set of receivers with fixed path loss exponents.
///
/// Parameter vector layout: `[x, y, z, ln zeta_0, .., ln zeta_{k-1}]`.
#[derive(Debug, Clone)]
pub(crate) struct Problem<'a> {
    receivers: Vec<&'a ReceiverSeries>,
    alpha: Vec<f64>,
}

/// Objective value, gradient and Gauss-Newton curvature at one point.
pub(crate) struct Evaluation {
    pub nll: f64,
    pub gradient: DVector<f64>,
    pub curvature: DMatrix<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(receivers: Vec<&'a ReceiverSeries>, alpha: Vec<f64>) -> Self {
        assert_eq!(receivers.len(), alpha.len());
        Self { receivers, alpha }
    }

    pub fn from_subset(meas: &'a MeasurementSet, subset: &[usize], alpha: &[f64]) -> Result<Self> {
        if subset.len() != alpha.len() {
            return Err(Error::InvalidConfig(format!(
                "{} receivers but {} exponents",
                subset.len(),
                alpha.len()
            )));
        }
        let receivers = subset
            .iter()
            .map(|&i| {
                meas.receivers
                    .get(i)
                    .ok_or_else(|| Error::InvalidConfig(format!("receiver index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(receivers, alpha.to_vec()))
    }

    pub fn dim(&self) -> usize {
        3 + self.receivers.len()
    }

    /// Exponent of the jamming term, `ln zeta - alpha ln d`, and `d`.
    fn exponent(&self, p0: Vec3, log_zeta: f64, alpha: f64, p: Vec3) -> Result<(f64, f64)> {
        let d2 = (p0 - p).dot(p0 - p);
        if !(d2 > 0.0) {
            return Err(Error::NonPositiveDistance(d2.sqrt()));
        }
        Ok((log_zeta - 0.5 * alpha * d2.ln(), d2.sqrt()))
    }

    pub fn residuals(&self, params: &[f64]) -> Result<Vec<Vec<f64>>> {
        let p0 = Vec3::from_slice(params);
        self.receivers
            .iter()
            .enumerate()
            .map(|(k, r)| {
                r.positions
                    .iter()
                    .zip(&r.values)
                    .map(|(&p, &g)| {
                        let (x, _) = self.exponent(p0, params[3 + k], self.alpha[k], p)?;
                        Ok(g - r.quiet_db + DB_PER_NEPER * softplus(x))
                    })
                    .collect()
            })
            .collect()
    }

    /// Sum of squared residuals per receiver.
    pub fn sums_of_squares(&self, params: &[f64]) -> Result<Vec<f64>> {
        let p0 = Vec3::from_slice(params);
        let mut out = Vec::with_capacity(self.receivers.len());
        for (k, r) in self.receivers.iter().enumerate() {
            let mut ssr = 0.0;
            for (&p, &g) in r.positions.iter().zip(&r.values) {
                let (x, _) = self.exponent(p0, params[3 + k], self.alpha[k], p)?;
                let res = g - r.quiet_db + DB_PER_NEPER * softplus(x);
                ssr += res * res;
            }
            out.push(ssr);
        }
        Ok(out)
    }

    pub fn nll(&self, params: &[f64], sigma2: &[f64]) -> Result<f64> {
        let ssr = self.sums_of_squares(params)?;
        Ok(self
            .receivers
            .iter()
            .zip(ssr.iter().zip(sigma2))
            .map(|(r, (&s, &v))| nll_term(r.len(), s, v))
            .sum())
    }

    /// Closed-form variances `SSR_i / N_i` at `params`, floored at `floor`.
    pub fn profile_variances(&self, params: &[f64], floor: f64) -> Result<Vec<f64>> {
        let ssr = self.sums_of_squares(params)?;
        Ok(ssr
            .iter()
            .zip(&self.receivers)
            .map(|(s, r)| (s / r.len() as f64).max(floor))
            .collect())
    }

    pub fn evaluate(&self, params: &[f64], sigma2: &[f64]) -> Result<Evaluation> {
        let dim = self.dim();
        let p0 = Vec3::from_slice(params);
        let mut nll = 0.0;
        let mut gradient = DVector::zeros(dim);
        let mut curvature = DMatrix::zeros(dim, dim);

        for (k, r) in self.receivers.iter().enumerate() {
            let alpha = self.alpha[k];
            let w = 1.0 / sigma2[k];
            let mut ssr = 0.0;
            let mut g_pos = [0.0; 3];
            let mut g_zeta = 0.0;
            let mut h_pos = [[0.0; 3]; 3];
            let mut h_cross = [0.0; 3];
            let mut h_zeta = 0.0;
            for (&p, &g) in r.positions.iter().zip(&r.values) {
                let (x, d) = self.exponent(p0, params[3 + k], alpha, p)?;
                let res = g - r.quiet_db + DB_PER_NEPER * softplus(x);
                let dr_dzeta = DB_PER_NEPER * logistic(x);
                // dr/dp0 = dr/dx * dx/dd * dd/dp0, dx/dd = -alpha / d
                let scale = -dr_dzeta * alpha / (d * d);
                let dr_dpos = (p0 - p).to_array().map(|c| scale * c);

                ssr += res * res;
                g_zeta += res * dr_dzeta;
                h_zeta += dr_dzeta * dr_dzeta;
                for a in 0..3 {
                    g_pos[a] += res * dr_dpos[a];
                    h_cross[a] += dr_dpos[a] * dr_dzeta;
                    for b in 0..3 {
                        h_pos[a][b] += dr_dpos[a] * dr_dpos[b];
                    }
                }
            }
            nll += nll_term(r.len(), ssr, sigma2[k]);
            let z = 3 + k;
            gradient[z] = w * g_zeta;
            curvature[(z, z)] = w * h_zeta;
            for a in 0..3 {
                gradient[a] += w * g_pos[a];
                curvature[(a, z)] = w * h_cross[a];
                curvature[(z, a)] = w * h_cross[a];
                for b in 0..3 {
                    curvature[(a, b)] += w * h_pos[a][b];
                }
            }
        }
        Ok(Evaluation { nll, gradient, curvature })
    }
}

/// One receiver seen from a known jammer position, leaving `ln zeta` as the
/// only free parameter for a given exponent.
pub(crate) struct FixedPositionFit {
    drops: Vec<f64>,
    log_d: Vec<f64>,
}

impl FixedPositionFit {
    pub fn new(series: &ReceiverSeries, p0: Vec3) -> Result<Self> {
        let log_d = series
            .positions
            .iter()
            .map(|&p| {
                let d = (p0 - p).norm();
                if d > 0.0 { Ok(d.ln()) } else { Err(Error::NonPositiveDistance(d)) }
            })
            .collect::<Result<Vec<_>>>()?;
        let drops = series.values.iter().map(|g| g - series.quiet_db).collect();
        Ok(Self { drops, log_d })
    }

    fn ssr(&self, alpha: f64, log_zeta: f64) -> f64 {
        self.drops
            .iter()
            .zip(&self.log_d)
            .map(|(y, ld)| {
                let r = y + DB_PER_NEPER * softplus(log_zeta - alpha * ld);
                r * r
            })
            .sum()
    }

    /// Least-squares `ln zeta` by Gauss-Newton with backtracking, starting
    /// at `log_zeta`. Returns the fitted value and its sum of squares.
    ///
    /// With the noise variance profiled out the likelihood of a single
    /// receiver is a monotone function of its sum of squares, so this is
    /// also the likelihood maximizer.
    pub fn fit(&self, alpha: f64, mut log_zeta: f64, max_iters: usize, ls: &LineSearch) -> (f64, f64) {
        let mut ssr = self.ssr(alpha, log_zeta);
        for _ in 0..max_iters {
            let (mut g, mut h) = (0.0, 0.0);
            for (y, ld) in self.drops.iter().zip(&self.log_d) {
                let x = log_zeta - alpha * ld;
                let r = y + DB_PER_NEPER * softplus(x);
                let j = DB_PER_NEPER * logistic(x);
                g += r * j;
                h += j * j;
            }
            if !(h > 0.0) || g == 0.0 {
                break;
            }
            // the jamming term vanishes as ln zeta -> -inf; bound the stride
            let step = (-g / h).clamp(-MAX_LOG_ZETA_STEP, MAX_LOG_ZETA_STEP);
            let slope = 2.0 * g * step;
            let mut t = ls.step_init;
            let mut progressed = false;
            while t >= ls.min_step {
                let trial = self.ssr(alpha, log_zeta + t * step);
                if trial <= ssr + ls.c * t * slope {
                    log_zeta += t * step;
                    progressed = ssr - trial > RELATIVE_SSR_TOLERANCE * trial;
                    ssr = trial;
                    break;
                }
                t *= ls.shrink;
            }
            if !progressed {
                break;
            }
        }
        (log_zeta, ssr)
    }

    /// Negative log-likelihood at the closed-form variance for `ssr`.
    pub fn nll(&self, ssr: f64, floor: f64) -> f64 {
        let n = self.drops.len();
        nll_term(n, ssr, (ssr / n as f64).max(floor))
    }
}

const MAX_LOG_ZETA_STEP: f64 = 5.0;
const RELATIVE_SSR_TOLERANCE: f64 = 1e-14;

fn nll_term(n: usize, ssr: f64, sigma2: f64) -> f64 {
    0.5 * n as f64 * (2.0 * PI * sigma2).ln() + ssr / (2.0 * sigma2)
}

fn check_variances(sigma2: &[f64]) -> Result<()> {
    match sigma2.iter().find(|v| !(**v > 0.0)) {
        Some(v) => Err(Error::InvalidConfig(format!("noise variance must be positive, got {v}"))),
        None => Ok(()),
    }
}

fn params_from(p0: Vec3, zeta: &[f64]) -> Result<Vec<f64>> {
    if let Some(z) = zeta.iter().find(|z| !(**z > 0.0)) {
        return Err(Error::InvalidConfig(format!("zeta must be positive, got {z}")));
    }
    let mut params = p0.to_array().to_vec();
    params.extend(zeta.iter().map(|z| z.ln()));
    Ok(params)
}

/// Residuals of the receivers in `subset`, one list per receiver.
pub fn residuals(
    p0: Vec3,
    zeta: &[f64],
    alpha: &[f64],
    meas: &MeasurementSet,
    subset: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let problem = Problem::from_subset(meas, subset, alpha)?;
    problem.residuals(&params_from(p0, zeta)?)
}

/// Negative log-likelihood of the receivers in `subset`.
///
/// `zeta`, `alpha` and `sigma2` are aligned with `subset`.
pub fn neg_log_likelihood(
    p0: Vec3,
    zeta: &[f64],
    alpha: &[f64],
    sigma2: &[f64],
    meas: &MeasurementSet,
    subset: &[usize],
) -> Result<f64> {
    check_variances(sigma2)?;
    let problem = Problem::from_subset(meas, subset, alpha)?;
    if sigma2.len() != subset.len() {
        return Err(Error::InvalidConfig("sigma2 length does not match subset".into()));
    }
    problem.nll(&params_from(p0, zeta)?, sigma2)
}

/// Maximum-likelihood noise variance per receiver given the residuals.
pub fn sigma2_closed_form(residuals: &[Vec<f64>]) -> Vec<f64> {
    residuals
        .iter()
        .map(|r| {
            if r.is_empty() {
                0.0
            } else {
                r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
            }
        })
        .collect()
}

/// Gradient of [`neg_log_likelihood`] with respect to the jammer position
/// and to `ln zeta` of each receiver in `subset`.
pub fn nll_gradient(
    p0: Vec3,
    zeta: &[f64],
    alpha: &[f64],
    sigma2: &[f64],
    meas: &MeasurementSet,
    subset: &[usize],
) -> Result<(Vec3, Vec<f64>)> {
    check_variances(sigma2)?;
    let problem = Problem::from_subset(meas, subset, alpha)?;
    if sigma2.len() != subset.len() {
        return Err(Error::InvalidConfig("sigma2 length does not match subset".into()));
    }
    let eval = problem.evaluate(&params_from(p0, zeta)?, sigma2)?;
    let g = eval.gradient;
    Ok((Vec3::new(g[0], g[1], g[2]), g.iter().skip(3).copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{agc_sample, MeasurementKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(id: usize, positions: Vec<Vec3>, values: Vec<f64>) -> ReceiverSeries {
        ReceiverSeries {
            id,
            start: positions[0],
            positions,
            values,
            quiet_db: 0.0,
            quiet_variance: 0.1,
            noise_var_true: 0.1,
        }
    }

    fn exact_set(jammer: Vec3, zeta: f64, alpha: &[f64], tracks: &[(Vec3, Vec3)]) -> MeasurementSet {
        let times: Vec<f64> = (0..30).map(|k| k as f64 * 10.0).collect();
        let receivers = tracks
            .iter()
            .enumerate()
            .map(|(i, &(start, vel))| {
                let positions: Vec<Vec3> = times.iter().map(|&t| start + vel * t).collect();
                let values = positions
                    .iter()
                    .map(|&p| agc_sample(0.0, zeta, alpha[i], (p - jammer).norm(), 0.0).unwrap())
                    .collect();
                series(i, positions, values)
            })
            .collect();
        MeasurementSet { kind: MeasurementKind::Agc, times, receivers }
    }

    fn tracks() -> Vec<(Vec3, Vec3)> {
        vec![
            (Vec3::new(800.0, -300.0, 100.0), Vec3::new(-1.0, 1.0, 0.2)),
            (Vec3::new(-600.0, 400.0, -200.0), Vec3::new(0.5, 1.2, 0.0)),
            (Vec3::new(100.0, 900.0, 300.0), Vec3::new(1.4, -0.3, -0.1)),
        ]
    }

    #[test]
    fn perfect_fit_has_zero_residuals() {
        let jammer = Vec3::new(12.0, -7.0, 3.0);
        let alpha = [2.0, 2.1, 2.3];
        let m = exact_set(jammer, 3e8, &alpha, &tracks());
        let subset = [0, 1, 2];
        let res = residuals(jammer, &[3e8; 3], &alpha, &m, &subset).unwrap();
        assert!(res.iter().flatten().all(|r| r.abs() < 1e-9));
        let sigma2 = [0.1, 0.2, 0.3];
        let nll = neg_log_likelihood(jammer, &[3e8; 3], &alpha, &sigma2, &m, &subset).unwrap();
        let expected: f64 = sigma2.iter().map(|s| 15.0 * (2.0 * PI * s).ln()).sum();
        assert!((nll - expected).abs() < 1e-9);
    }

    #[test]
    fn single_sample_hand_value() {
        // one receiver, one sample, residual r = 0.7 with zeta tiny
        let m = MeasurementSet {
            kind: MeasurementKind::Agc,
            times: vec![0.0],
            receivers: vec![series(0, vec![Vec3::new(10.0, 0.0, 0.0)], vec![0.7])],
        };
        let nll = neg_log_likelihood(Vec3::ZERO, &[1e-300], &[2.0], &[1.0], &m, &[0]).unwrap();
        let expected = 0.5 * (2.0 * PI).ln() + 0.49 / 2.0;
        assert!((nll - expected).abs() < 1e-12, "{nll} vs {expected}");
    }

    #[test]
    fn generating_point_minimizes_over_grid() {
        let jammer = Vec3::new(0.0, 0.0, 0.0);
        let alpha = [2.0, 2.0, 2.0];
        let m = exact_set(jammer, 3e8, &alpha, &tracks());
        let z = [3e8; 3];
        let s = [0.1; 3];
        let at_truth = neg_log_likelihood(jammer, &z, &alpha, &s, &m, &[0, 1, 2]).unwrap();
        for dx in [-50.0, -5.0, 0.0, 5.0, 50.0] {
            for dy in [-50.0, -5.0, 0.0, 5.0, 50.0] {
                for dz in [-50.0, 0.0, 50.0] {
                    let p = Vec3::new(dx, dy, dz);
                    let v = neg_log_likelihood(p, &z, &alpha, &s, &m, &[0, 1, 2]).unwrap();
                    assert!(v >= at_truth);
                }
            }
        }
    }

    #[test]
    fn closed_form_variance_examples() {
        assert_eq!(sigma2_closed_form(&[vec![0.0, 0.0, 0.0]]), vec![0.0]);
        assert_eq!(sigma2_closed_form(&[vec![1.0, -1.0]]), vec![1.0]);
        assert_eq!(sigma2_closed_form(&[vec![3.0]]), vec![9.0]);
    }

    #[test]
    fn gradient_vanishes_at_generating_parameters() {
        let jammer = Vec3::new(30.0, 20.0, -10.0);
        let alpha = [2.0, 2.2, 2.1];
        let m = exact_set(jammer, 2e8, &alpha, &tracks());
        let (gp, gz) = nll_gradient(jammer, &[2e8; 3], &alpha, &[0.1; 3], &m, &[0, 1, 2]).unwrap();
        assert!(gp.norm() < 1e-9, "{gp:?}");
        assert!(gz.iter().all(|g| g.abs() < 1e-9), "{gz:?}");
    }

    #[test]
    fn symmetric_pair_has_no_gradient_along_axis() {
        // receivers mirrored through the plane x = 0, jammer guess on that plane
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let mk = |id: usize, sx: f64| {
            let positions: Vec<Vec3> = times.iter().map(|&t| Vec3::new(sx, 10.0 * t, 0.0)).collect();
            let values = positions.iter().map(|p| -3.0 - 0.1 * p.y).collect();
            series(id, positions, values)
        };
        let m = MeasurementSet {
            kind: MeasurementKind::Agc,
            times: times.clone(),
            receivers: vec![mk(0, 250.0), mk(1, -250.0)],
        };
        let (gp, _) =
            nll_gradient(Vec3::new(0.0, 40.0, 5.0), &[1e7, 1e7], &[2.0, 2.0], &[0.5, 0.5], &m, &[0, 1])
                .unwrap();
        assert!(gp.x.abs() < 1e-12 * gp.norm().max(1.0), "{gp:?}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alpha = [2.0, 2.4, 3.1];
        let m = exact_set(Vec3::ZERO, 3e8, &alpha, &tracks());
        let m = MeasurementSet {
            receivers: m
                .receivers
                .into_iter()
                .map(|mut r| {
                    r.values.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
                    r
                })
                .collect(),
            ..m
        };
        let problem = Problem::from_subset(&m, &[0, 1, 2], &alpha).unwrap();
        for _ in 0..20 {
            let params = vec![
                rng.random_range(-400.0..400.0),
                rng.random_range(-400.0..400.0),
                rng.random_range(-400.0..400.0),
                rng.random_range(14.0..22.0),
                rng.random_range(14.0..22.0),
                rng.random_range(14.0..22.0),
            ];
            let sigma2 = [0.3, 1.1, 0.05];
            let g = problem.evaluate(&params, &sigma2).unwrap().gradient;
            for j in 0..params.len() {
                // 1e-4 relative in position and in zeta itself (absolute in ln zeta)
                let h = if j < 3 { 1e-4 * params[j].abs().max(1.0) } else { 1e-4 };
                let mut up = params.clone();
                let mut dn = params.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (problem.nll(&up, &sigma2).unwrap() - problem.nll(&dn, &sigma2).unwrap())
                    / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1e-3);
                assert!(rel < 1e-5, "param {j}: analytic {} fd {fd}", g[j]);
            }
        }
    }

    #[test]
    fn coincident_position_rejected() {
        let m = exact_set(Vec3::ZERO, 3e8, &[2.0; 3], &tracks());
        let p = m.receivers[1].positions[4];
        assert!(matches!(
            neg_log_likelihood(p, &[1e8; 3], &[2.0; 3], &[0.1; 3], &m, &[0, 1, 2]),
            Err(Error::NonPositiveDistance(_))
        ));
        assert!(neg_log_likelihood(Vec3::ZERO, &[1e8; 3], &[2.0; 3], &[0.0; 3], &m, &[0, 1, 2]).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((logistic(0.0) - 0.5).abs() < 1e-15);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
    }
}
