//! The JSON experiment document: `swarm`, `scenario` and `policies` sections.
//!
//! ```json
//! {
//!   "swarm": {
//!     "nyquist_rate_hz": 12e9, "resolution_hz": 10e6,
//!     "nodes": [
//!       { "node_id": 1, "position_m": [0, 0],   "decimation": 4 },
//!       { "node_id": 2, "position_m": [1.5, 0], "decimation": 3 }
//!     ]
//!   },
//!   "scenario": {
//!     "snr_db": 0, "seed": 1, "capture_duration_s": 20e-6,
//!     "emitters": [ { "carrier_hz": 0.95e9, "modulation": "tone", "power": 1 } ]
//!   },
//!   "policies": { "peak": { "threshold_factor_db": 10 },
//!                 "detection": { "mode": "relative_db", "value": 10 } }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::Threshold;
use crate::error::{Error, Result};
use crate::sampler::PeakPolicy;
use crate::scenario::{ScenarioConfig, SwarmConfig};

fn default_match_tolerance() -> f64 {
    1.0
}

/// Axis values used by the `sweep` subcommand when none are given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDefaults {
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub resolution_hz: Vec<f64>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policies {
    #[serde(default)]
    pub peak: PeakPolicy,
    #[serde(default)]
    pub detection: Threshold,
    /// A detection within this many channels of a true carrier counts as a hit.
    #[serde(default = "default_match_tolerance")]
    pub match_tolerance_bins: f64,
    #[serde(default)]
    pub allow_missing_node: bool,
    #[serde(default)]
    pub off_grid: bool,
    #[serde(default)]
    pub sweep: SweepDefaults,
}

impl Default for Policies {
    fn default() -> Self {
        Policies {
            peak: PeakPolicy::default(),
            detection: Threshold::default(),
            match_tolerance_bins: default_match_tolerance(),
            allow_missing_node: false,
            off_grid: false,
            sweep: SweepDefaults::default(),
        }
    }
}

impl Policies {
    pub fn validate(&self) -> Result<()> {
        self.peak.validate("policies.peak")?;
        match self.detection {
            Threshold::RelativeDb(db) if !(db.is_finite() && db >= 0.0) => {
                return Err(Error::validation(
                    "policies.detection.value",
                    "relative threshold must be >= 0 dB",
                ))
            }
            Threshold::Absolute(level) if !(level.is_finite() && level >= 0.0) => {
                return Err(Error::validation(
                    "policies.detection.value",
                    "absolute threshold must be >= 0",
                ))
            }
            _ => {}
        }
        if !(self.match_tolerance_bins >= 0.0) {
            return Err(Error::validation(
                "policies.match_tolerance_bins",
                "tolerance must be >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub swarm: SwarmConfig,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub policies: Policies,
}

impl ExperimentConfig {
    /// Parses a document; errors carry the JSON path of the offending key.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Parse {
                path,
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.swarm.validate()?;
        self.scenario.validate(&self.swarm)?;
        self.policies.validate()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "swarm": {
            "nyquist_rate_hz": 12.0, "resolution_hz": 1.0,
            "nodes": [ {"node_id": 1, "decimation": 4}, {"node_id": 2, "decimation": 3, "position_m": [1.5, 0]} ]
        },
        "scenario": { "snr_db": null, "seed": 3, "capture_duration_s": 2.0,
                      "emitters": [ {"carrier_hz": 5.0} ] }
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json_str(DOC).unwrap();
        assert_eq!(cfg.swarm.nodes[1].position_m, [1.5, 0.0]);
        assert_eq!(cfg.scenario.emitters[0].power, 1.0);
        assert_eq!(cfg.policies, Policies::default());
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn parse_errors_name_the_key_path() {
        let bad = DOC.replace(r#""decimation": 3"#, r#""decimation": "three""#);
        let err = ExperimentConfig::from_json_str(&bad)
            .unwrap_err()
            .to_string();
        assert!(err.contains("swarm.nodes[1].decimation"), "{err}");
        let bad = DOC.replace(r#""carrier_hz": 5.0"#, r#""carrier_hz": 5.0, "colour": 1"#);
        let err = ExperimentConfig::from_json_str(&bad)
            .unwrap_err()
            .to_string();
        assert!(err.contains("scenario.emitters[0]"), "{err}");
    }

    #[test]
    fn validation_errors_name_the_key_path() {
        let bad = DOC.replace(
            r#""carrier_hz": 5.0"#,
            r#""carrier_hz": 5.0, "azimuth_rad": 2.0"#,
        );
        let err = ExperimentConfig::from_json_str(&bad)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(
            err.to_string().contains("scenario.emitters[0].azimuth_rad"),
            "{err}"
        );
    }
}
