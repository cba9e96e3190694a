use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::completion::CompletionConfig;
use crate::controller::ControllerConfig;
use crate::hop::HopConfig;

/// Every tunable of the engine, loaded from one JSON document. Missing keys
/// take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub hop: HopConfig,
    pub completion: CompletionConfig,
    pub controller: ControllerConfig,
    /// Upper bound on loop steps spent on one event.
    pub max_steps_per_event: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            hop: HopConfig::default(),
            completion: CompletionConfig::default(),
            controller: ControllerConfig::default(),
            max_steps_per_event: 64,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config invalid: {0}")]
    Invalid(String),
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.controller
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let w = &self.completion.scr;
        if [w.has_noun, w.noun, w.verb, w.onset].iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(ConfigError::Invalid("refinement weights must lie in [0, 1]".into()));
        }
        let h = &self.hop;
        if !(h.beta > 0.0) || h.support_cap == 0 {
            return Err(ConfigError::Invalid("hop beta and support cap must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
