//! JSON estimate output shared by the estimator and the baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{AlphaFit, PositionEstimate};
use crate::scenario::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Centroid,
    Ls,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::Centroid, Method::Ls];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Centroid => "centroid",
            Method::Ls => "ls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "proposed" | "ml" => Ok(Method::Proposed),
            "centroid" => Ok(Method::Centroid),
            "ls" => Ok(Method::Ls),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// Parse a comma-separated method list, keeping first occurrences in order.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for item in list.split(',').filter(|s| !s.trim().is_empty()) {
        let m: Method = item.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// Position estimate as written to JSON. Nuisance fields are aligned with
/// `selected` and empty for the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub position: Vec3,
    pub selected: Vec<usize>,
    pub alpha: Vec<f64>,
    pub zeta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub alpha_search: Vec<AlphaFit>,
    pub nll: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EstimateReport {
    pub fn baseline(method: Method, position: Vec3, selected: Vec<usize>) -> Self {
        Self {
            method,
            position,
            selected,
            alpha: Vec::new(),
            zeta: Vec::new(),
            sigma2: Vec::new(),
            alpha_search: Vec::new(),
            nll: None,
            iterations: 0,
            converged: true,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl From<&PositionEstimate> for EstimateReport {
    fn from(est: &PositionEstimate) -> Self {
        Self {
            method: Method::Proposed,
            position: est.p0_hat,
            selected: est.selected.clone(),
            alpha: est.nuisance.alpha.clone(),
            zeta: est.nuisance.zeta.clone(),
            sigma2: est.nuisance.sigma2.clone(),
            alpha_search: est.alpha_fits.clone(),
            nll: est.nll.is_finite().then_some(est.nll),
            iterations: est.iterations,
            converged: est.converged,
        }
    }
}
