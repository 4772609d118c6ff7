use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth demand used to draw accept decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandFamily {
    Logistic,
    LogisticFdpe,
    Segmented,
    TimeVarying,
    NeuralNet,
}

impl DemandFamily {
    pub const ALL: [DemandFamily; 5] = [
        DemandFamily::Logistic,
        DemandFamily::LogisticFdpe,
        DemandFamily::Segmented,
        DemandFamily::TimeVarying,
        DemandFamily::NeuralNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DemandFamily::Logistic => "logistic",
            DemandFamily::LogisticFdpe => "logistic-fdpe",
            DemandFamily::Segmented => "segmented",
            DemandFamily::TimeVarying => "time-varying",
            DemandFamily::NeuralNet => "neural-net",
        }
    }
}

impl fmt::Display for DemandFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DemandFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DemandFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    pub n_applications: usize,
    pub demand_family: DemandFamily,
    /// Latent applicant segments. Shapes the feature mixture for every
    /// family; only the segmented family gives them distinct demand.
    pub n_segments: usize,
    /// Size of the coefficient drift of the time-varying family.
    pub drift_magnitude: f64,
    /// Standard deviation (APR points) of the behavioral pricing noise.
    pub behavioral_noise_sd: f64,
    pub target_accept_rate: f64,
    pub seed: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            n_applications: 30_000,
            demand_family: DemandFamily::Logistic,
            n_segments: 3,
            drift_magnitude: 1.0,
            behavioral_noise_sd: 0.75,
            target_accept_rate: 0.21,
            seed: 333,
        }
    }
}

impl MarketConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_applications == 0 {
            return Err(Error::InvalidConfig("n_applications must be > 0".into()));
        }
        if !(self.target_accept_rate > 0.0 && self.target_accept_rate < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target_accept_rate {} outside (0, 1)",
                self.target_accept_rate
            )));
        }
        if self.n_segments == 0 {
            return Err(Error::InvalidConfig("n_segments must be >= 1".into()));
        }
        if !(self.behavioral_noise_sd >= 0.0) || !self.drift_magnitude.is_finite() {
            return Err(Error::InvalidConfig("noise sd must be >= 0 and drift finite".into()));
        }
        Ok(())
    }
}
