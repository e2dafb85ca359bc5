use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affordance::DEFAULT_W_THETA;
use crate::error::{Error, Result};
use crate::perception::PerceptionConfig;
use crate::simulate::SimConfig;
use crate::world::{builtin_object, ObjectModel, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin object ids or paths to object JSON files.
    pub objects: Vec<String>,
    pub tasks: Vec<Task>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed for the scripted training demonstrations.
    #[serde(default)]
    pub demo_seed: u64,
    #[serde(default = "default_w_theta")]
    pub w_theta: f64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_w_theta() -> f64 {
    DEFAULT_W_THETA
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            objects: ["travel_mug", "measuring_spoon", "glass", "bowl", "ashtray"]
                .map(String::from)
                .to_vec(),
            tasks: Task::ALL.to_vec(),
            seeds: (0..10).collect(),
            perception: PerceptionConfig::default(),
            sim: SimConfig::default(),
            output_dir: default_output_dir(),
            demo_seed: 0,
            w_theta: DEFAULT_W_THETA,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() || self.tasks.is_empty() || self.seeds.is_empty() {
            return Err(Error::Validation("objects, tasks and seeds must be non-empty".into()));
        }
        if !(self.w_theta >= 0.0 && self.w_theta.is_finite()) {
            return Err(Error::Validation("w_theta must be finite and non-negative".into()));
        }
        self.perception.validate()?;
        self.sim.validate()?;
        self.resolve_objects().map(|_| ())
    }

    pub fn resolve_objects(&self) -> Result<Vec<ObjectModel>> {
        self.objects.iter().map(|o| resolve_object(o)).collect()
    }

    /// Short stable digest identifying this configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

/// A builtin object id, or failing that a path to an object JSON file.
pub fn resolve_object(spec: &str) -> Result<ObjectModel> {
    match builtin_object(spec) {
        Ok(o) => Ok(o),
        Err(e) => {
            let p = Path::new(spec);
            if p.is_file() {
                ObjectModel::from_json(&std::fs::read_to_string(p)?)
            } else {
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
        assert_eq!(cfg.hash(), ExperimentConfig::default().hash());
        assert_eq!(cfg.hash().len(), 16);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"objects":["glass"],"tasks":["pour"],"seeds":[1]}"#).unwrap();
        assert_eq!(cfg.sim, SimConfig::default());
        assert_eq!(cfg.w_theta, DEFAULT_W_THETA);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"objects":[],"tasks":["pour"],"seeds":[1]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"objects":["teapot"],"tasks":["pour"],"seeds":[1]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"objects":["glass"],"tasks":["stir"],"seeds":[1]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"objects":["glass"],"tasks":["pour"],"seeds":[1],"extra":1}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let mut cfg = ExperimentConfig::default();
        let h = cfg.hash();
        cfg.seeds.push(99);
        assert_ne!(h, cfg.hash());
    }
}
