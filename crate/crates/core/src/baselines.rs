//! Comparison methods: centroid of detecting receivers and calibrated
//! least-squares multilateration with a free-space path loss assumption.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::MeasurementSet;
use crate::error::{Error, Result};
use crate::scenario::Vec3;

/// Which single position stands in for a moving receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverPosition {
    /// Position at scenario start.
    #[default]
    Start,
    /// Mean position over the jammed samples.
    JammedMean,
}

fn representative(meas: &MeasurementSet, i: usize, which: ReceiverPosition) -> Vec3 {
    let r = &meas.receivers[i];
    match which {
        ReceiverPosition::Start => r.start,
        ReceiverPosition::JammedMean => r.mean_position().unwrap_or(r.start),
    }
}

/// Mean position of all receivers that detect the jammer.
pub fn centroid_estimate(
    meas: &MeasurementSet,
    threshold_db: f64,
    which: ReceiverPosition,
) -> Result<Vec3> {
    let jammed = meas.jammed_receivers(threshold_db);
    let points: Vec<Vec3> = jammed.iter().map(|&i| representative(meas, i, which)).collect();
    Vec3::mean(&points).ok_or(Error::NoJammedReceivers)
}

/// Distance implied by a drop of `drop_db` under free-space path loss and
/// a calibrated `zeta`.
pub fn ls_distance_from_drop(drop_db: f64, zeta_calibrated: f64) -> Result<f64> {
    if !(drop_db > 0.0) {
        return Err(Error::LeastSquaresFailure(format!("no attenuation ({drop_db} dB)")));
    }
    let ratio = (drop_db * std::f64::consts::LN_10 / 10.0).exp_m1();
    let d = (zeta_calibrated / ratio).sqrt();
    if d.is_finite() && d > 0.0 {
        Ok(d)
    } else {
        Err(Error::LeastSquaresFailure(format!("distance not finite for drop {drop_db} dB")))
    }
}

/// Ratio of smallest to largest singular value below which the
/// linearized system counts as rank deficient.
const RANK_TOLERANCE: f64 = 1e-9;

/// Linearized least-squares position from ranges to known anchors.
///
/// Each range equation `|p - a_i|^2 = d_i^2` is differenced against the
/// mean equation, which removes `|p|^2` and leaves a linear system in `p`.
/// Needs at least four anchors not all in one plane.
pub fn multilaterate(anchors: &[Vec3], ranges: &[f64]) -> Result<Vec3> {
    if anchors.len() != ranges.len() {
        return Err(Error::InvalidConfig("anchor and range counts differ".into()));
    }
    let n = anchors.len();
    if n < 4 {
        return Err(Error::LeastSquaresFailure(format!("{n} anchors, need at least 4")));
    }
    let centre = Vec3::mean(anchors).expect("non-empty");
    let rhs: Vec<f64> = anchors
        .iter()
        .zip(ranges)
        .map(|(a, d)| (*a - centre).dot(*a - centre) - d * d)
        .collect();
    let mean_rhs = rhs.iter().sum::<f64>() / n as f64;

    let a = DMatrix::from_fn(n, 3, |i, j| 2.0 * (anchors[i] - centre).to_array()[j]);
    let b = DVector::from_iterator(n, rhs.iter().map(|v| v - mean_rhs));
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_max > 0.0) || s_min / s_max < RANK_TOLERANCE {
        return Err(Error::LeastSquaresFailure("rank-deficient anchor geometry".into()));
    }
    let x = svd
        .solve(&b, s_max * RANK_TOLERANCE)
        .map_err(|e| Error::LeastSquaresFailure(e.to_string()))?;
    let p = centre + Vec3::new(x[0], x[1], x[2]);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(Error::LeastSquaresFailure("non-finite solution".into()))
    }
}

/// Calibrated least squares over the jammed receivers.
///
/// `zeta_calibrated` is indexed like `meas.receivers`. Each receiver's mean
/// drop over the jammed half is inverted to a distance at its mean jammed
/// position, then the ranges are multilaterated.
pub fn ls_estimate(meas: &MeasurementSet, zeta_calibrated: &[f64], threshold_db: f64) -> Result<Vec3> {
    if zeta_calibrated.len() != meas.receivers.len() {
        return Err(Error::InvalidConfig("one calibrated zeta per receiver required".into()));
    }
    let mut anchors = Vec::new();
    let mut ranges = Vec::new();
    for i in meas.jammed_receivers(threshold_db) {
        let r = &meas.receivers[i];
        let mean_value = r.values.iter().sum::<f64>() / r.len() as f64;
        let Ok(d) = ls_distance_from_drop(r.quiet_db - mean_value, zeta_calibrated[i]) else {
            continue;
        };
        anchors.push(representative(meas, i, ReceiverPosition::JammedMean));
        ranges.push(d);
    }
    if anchors.is_empty() {
        return Err(Error::NoJammedReceivers);
    }
    multilaterate(&anchors, &ranges)
}
