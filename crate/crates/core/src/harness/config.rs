use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ScattererModel;
use crate::error::{Error, Result};
use crate::pipeline::{ArrayConfig, EstimatorConfig, Method, SystemModel};

/// Version tag every config file must carry.
pub const SCHEMA: &str = "nearfield-experiment/1";

/// Axis-aligned box the user center is drawn from, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Total pilot energy `p` per user, shared by every method.
    pub tx_power: f64,
    pub user_box: UserBox,
    pub scatterers: ScattererModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            tx_power: 1.0,
            user_box: UserBox {
                x: [5.0, 15.0],
                y: [-5.0, 5.0],
                z: [-1.0, -1.0],
            },
            scatterers: ScattererModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses the available parallelism. Output does not
    /// depend on it.
    #[serde(default)]
    pub threads: usize,
}

/// RF-chain totals as a source states them, checked against the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredRf {
    pub rf_chains: usize,
    pub antennas_per_chain: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub profile: String,
    pub array: ArrayConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub scene: SceneConfig,
    pub sweep: SweepConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_rf: Option<DeclaredRf>,
    /// Wall-clock stage timings in the results. Off by default because
    /// timings make output bytes differ between runs.
    #[serde(default)]
    pub record_timings: bool,
}

impl ExperimentConfig {
    /// Full-size geometry. Slow: minutes per trial for the baselines.
    pub fn full() -> Self {
        Self {
            schema: SCHEMA.into(),
            profile: "full".into(),
            array: ArrayConfig::full(),
            estimator: EstimatorConfig::default(),
            scene: SceneConfig::default(),
            sweep: SweepConfig {
                methods: Method::ALL.to_vec(),
                snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
                trials: 200,
                base_seed: 1,
                threads: 0,
            },
            declared_rf: Some(DeclaredRf {
                rf_chains: 256,
                antennas_per_chain: 6,
            }),
            record_timings: false,
        }
    }

    /// Reduced geometry that sweeps in minutes.
    pub fn desk() -> Self {
        Self {
            profile: "desk".into(),
            array: ArrayConfig::desk(),
            estimator: EstimatorConfig::desk(),
            sweep: SweepConfig {
                trials: 50,
                ..Self::full().sweep
            },
            declared_rf: None,
            ..Self::full()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected full or desk)"))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the config and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema != SCHEMA {
            return bad(format!("schema '{}' is not supported (expected '{SCHEMA}')", self.schema));
        }
        let mut warnings = Vec::new();
        let model = self.model()?;
        let est = &self.estimator;
        let per_tile = model.tiling.antennas_per_tile();
        if est.chains_per_tile == 0 || per_tile % est.chains_per_tile != 0 {
            return bad(format!(
                "chains_per_tile = {} does not divide the {per_tile} antennas of a tile",
                est.chains_per_tile
            ));
        }
        let m_s = per_tile / est.chains_per_tile;
        if est.slots < m_s {
            return bad(format!("slots T = {} must be at least M_s = {m_s}", est.slots));
        }
        if let Some(d) = self.declared_rf {
            let m = model.bs.len();
            let rf = est.chains_per_tile * model.tiling.len();
            if d.rf_chains * d.antennas_per_chain != m {
                warnings.push(format!(
                    "declared M_RF = {} with M_s = {} is inconsistent with M = {m}; using M_RF = {rf}, M_s = {m_s}",
                    d.rf_chains, d.antennas_per_chain
                ));
            } else if d.rf_chains != rf {
                return bad(format!("declared M_RF = {} but the estimator uses {rf} chains", d.rf_chains));
            }
        }
        let sc = &self.scene;
        if !(sc.tx_power > 0.0) {
            return bad("scene.tx_power must be positive".into());
        }
        let b = &sc.user_box;
        for (name, [lo, hi]) in [("x", b.x), ("y", b.y), ("z", b.z)] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return bad(format!("user_box.{name} must be an ordered finite interval"));
            }
        }
        if !(b.x[0] > 0.0) {
            return bad("user_box.x must lie in x > 0".into());
        }
        let s = &sc.scatterers;
        if !(s.x_fraction[0] > 0.0 && s.x_fraction[0] <= s.x_fraction[1]) {
            return bad("scatterers.x_fraction must be an ordered interval in (0, inf)".into());
        }
        let sw = &self.sweep;
        if sw.methods.is_empty() || sw.snr_db.is_empty() || sw.trials == 0 {
            return bad("sweep needs at least one method, one SNR point and one trial".into());
        }
        if sw.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("sweep.snr_db values must be finite".into());
        }
        let mut seen = sw.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != sw.methods.len() {
            return bad("sweep.methods lists a method twice".into());
        }
        if self.record_timings {
            warnings.push("record_timings is on; outputs will differ between runs".into());
        }
        Ok(warnings)
    }

    /// Geometry and dictionaries for this config. Structural errors are
    /// reported as config errors.
    pub fn model(&self) -> Result<SystemModel> {
        SystemModel::new(&self.array, &self.estimator).map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        let full = ExperimentConfig::full().validate().unwrap();
        assert_eq!(full.len(), 1, "{full:?}");
        assert!(full[0].contains("M_RF = 128"), "{}", full[0]);
        assert!(ExperimentConfig::desk().validate().unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_identity() {
        for cfg in [ExperimentConfig::full(), ExperimentConfig::desk()] {
            let text = cfg.to_json();
            let back = ExperimentConfig::from_json(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::desk();
        cfg.schema = "other/9".into();
        assert!(cfg.validate().unwrap_err().is_config());

        let mut cfg = ExperimentConfig::desk();
        cfg.estimator.chains_per_tile = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk();
        cfg.array.tiles = [3, 2];
        assert!(cfg.validate().unwrap_err().is_config());

        let mut cfg = ExperimentConfig::desk();
        cfg.declared_rf = Some(DeclaredRf {
            rf_chains: 16,
            antennas_per_chain: 8,
        });
        assert!(cfg.validate().is_err());

        let text = ExperimentConfig::desk().to_json().replace("\"trials\"", "\"trails\"");
        assert!(ExperimentConfig::from_json(&text).unwrap_err().is_config());

        let text = ExperimentConfig::desk().to_json().replace("proposed-sbl", "proposed-magic");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }
}
