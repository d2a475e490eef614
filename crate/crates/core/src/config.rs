//! The JSON scenario file and the scenario fingerprint.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::handover::{EventParams, SimConfig};
use crate::mobility::MobilityConfig;
use crate::scenario::NetworkConfig;
use crate::sweep::SweepSpec;

/// Everything needed to reproduce a sweep. Every section is optional in the
/// file and falls back to its defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkConfig,
    pub mobility: MobilityConfig,
    pub event: EventParams,
    pub sweep: SweepSpec,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.mobility.validate()?;
        self.event.validate()?;
        self.sweep.validate()?;
        if self.mobility.user_count(self.network.area_side_m) == 0 {
            return Err(Error::Config("scenario yields zero users".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.network, &self.mobility, &self.event, &self.sweep.sim())
    }
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    network: &'a NetworkConfig,
    mobility: &'a MobilityConfig,
    event: &'a EventParams,
    sim: &'a SimConfig,
}

/// SHA-256 over the canonical JSON of every constant that shapes a
/// simulation result (everything except the A5 parameters and the seed).
pub fn fingerprint(network: &NetworkConfig, mobility: &MobilityConfig, event: &EventParams, sim: &SimConfig) -> String {
    let canonical = serde_json::to_vec(&FingerprintInput {
        network,
        mobility,
        event,
        sim,
    })
    .expect("config serialises");
    hex::encode(Sha256::digest(&canonical))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.network.macro_bands, vec![1.7, 2.1]);
    }

    #[test]
    fn field_names_match_config_keys() {
        let cfg = ScenarioConfig::from_json(
            r#"{"network": {"area_side_m": 1500, "n_macro_sites": 1, "shadowing_corr_dist_m": 20},
                "mobility": {"user_density_per_km2": 4, "speed_set_kmh": [3]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.network.area_side_m, 1500.0);
        assert_eq!(cfg.mobility.speed_set_kmh, vec![3.0]);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ScenarioConfig::from_json(r#"{"network": {"area": 5}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"network": {"area_side_m": -1}}"#).is_err());
        assert!(ScenarioConfig::from_json("{not json").is_err());
    }

    #[test]
    fn fingerprint_tracks_constants_only() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        b.sweep.seeds = vec![9, 10];
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.event.a3_offset_db = 3.0;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
