//! TOML configuration file holding scenario and estimator settings.
//!
//! ```toml
//! [scenario]
//! n_receivers = 10
//! agc_noise_var = 0.1
//! geometry = { type = "road_line", offset_east = 500.0 }
//!
//! [estimator]
//! zeta_init = 1e8
//! alpha_grid = [1.8, 2.0, 2.2, 2.4]
//! ```
//!
//! Both tables are optional and every key falls back to its default, or to
//! the value in a base configuration when overlaid with
//! [`FileConfig::overlay_toml`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: ScenarioConfig,
    pub estimator: EstimatorConfig,
}

impl FileConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: FileConfig = toml::from_str(text)?;
        cfg.estimator.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// `self` with every key present in `text` replaced; tables merge
    /// recursively, other values (including arrays) are replaced whole.
    pub fn overlay_toml(&self, text: &str) -> Result<Self> {
        let mut merged = toml::Value::try_from(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let patch: toml::Value = toml::from_str(text)?;
        merge(&mut merged, patch);
        let cfg: FileConfig = merged.try_into()?;
        cfg.estimator.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Value, patch: toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (key, value) in p {
                match b.get_mut(&key) {
                    // a tagged enum such as `geometry` is replaced whole so
                    // fields of the previous variant cannot leak through
                    Some(slot) if slot.is_table() && !value.get("type").is_some() => merge(slot, value),
                    _ => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}
