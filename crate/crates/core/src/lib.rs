//! Localization of a GNSS jammer from crowdsourced receiver measurements.
//!
//! Receivers report AGC levels or mean C/N0 values together with their own
//! positions. A jammer at an unknown position suppresses these values by
//! `10 log10(zeta * d^-alpha + 1)` dB, where `zeta` folds together jamming
//! power, channel gain and receiver noise, and `alpha` is an unknown path
//! loss exponent. The [`estimator`] recovers the jammer position by maximum
//! likelihood, treating `zeta`, `alpha` and the noise variances as nuisance
//! parameters. [`baselines`] holds the centroid and calibrated least-squares
//! comparison methods, and [`experiments`] drives Monte Carlo sweeps over
//! synthetic scenarios produced by [`scenario`] and [`channel`].

pub mod baselines;
pub mod channel;
pub mod config;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod report;
pub mod scenario;

pub use channel::{MeasurementKind, MeasurementSet, ReceiverSeries};
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, PositionEstimate};
pub use scenario::{Departure, Geometry, ScenarioConfig, ScenarioTruth, Trajectory, Vec3};
