//! Run configuration: one JSON document drives every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::CqlConfig;
use crate::error::{Error, Result};
use crate::market::MarketConfig;
use crate::response::{NeuralFitConfig, ResponseVariant};
use crate::reward::RewardParams;

/// Floating-point width of the agent networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponseOptions {
    /// Model used by `fit-response` and π_Opt.
    pub variant: ResponseVariant,
    pub neural: NeuralFitConfig,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self {
            variant: ResponseVariant::Logistic,
            neural: NeuralFitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub market: MarketConfig,
    pub reward: RewardParams,
    pub response: ResponseOptions,
    pub cql: CqlConfig,
    pub precision: Precision,
    /// Fitted response models used as offline evaluators, besides the truth.
    pub evaluators: Vec<ResponseVariant>,
    pub output_dir: PathBuf,
    /// Each seed drives one market, one response fit and one agent.
    pub seeds: Vec<u64>,
    /// Fixed α values for the ablation stage.
    pub ablation_alphas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            market: MarketConfig::default(),
            reward: RewardParams::default(),
            response: ResponseOptions::default(),
            cql: CqlConfig {
                hidden: vec![64, 64],
                ..CqlConfig::default()
            },
            precision: Precision::F32,
            evaluators: ResponseVariant::sweep_set(),
            output_dir: PathBuf::from("runs"),
            seeds: vec![333, 42, 3],
            ablation_alphas: vec![0.001, 0.1, 1.0, 10.0],
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.reward.validate()?;
        self.cql.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        if self.ablation_alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidConfig("ablation alphas must be finite and >= 0".into()));
        }
        for v in &self.evaluators {
            if let ResponseVariant::L2 { lambda } = v {
                if !(*lambda >= 0.0) {
                    return Err(Error::InvalidConfig(format!("l2 lambda {lambda} must be >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates a config document. Unknown keys are errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The config with market and agent seeded by `seed`.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.market.seed = seed;
        cfg.cql.seed = seed;
        cfg.response.neural.seed = seed;
        cfg.seeds = vec![seed];
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"seedz": [1]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"cql": {"gamma": 0.9, "gama": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"market": {"n_applications": 500}}"#).is_ok());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_json(r#"{"seeds": []}"#).is_err());
        assert!(RunConfig::from_json(r#"{"cql": {"gamma": 1.5}}"#).is_err());
    }
}
