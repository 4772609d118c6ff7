//! Stored pricing policies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::CqlPolicy;
use crate::baselines::{BehavioralPolicy, OptPolicy, PricingPolicy};
use crate::error::{Error, Result};
use crate::market::DatasetRow;
use crate::response::ResponseModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyArtifact {
    Cql(CqlPolicy),
    Opt(OptPolicy<ResponseModel>),
    OptFdpe(OptPolicy<ResponseModel>),
    Behavioral,
}

impl PolicyArtifact {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicyArtifact::Cql(_) => "cql",
            PolicyArtifact::Opt(_) => "opt",
            PolicyArtifact::OptFdpe(_) => "opt-fdpe",
            PolicyArtifact::Behavioral => "behavioral",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl PricingPolicy for CqlPolicy {
    fn prices(&self, rows: &[DatasetRow]) -> Result<Vec<f64>> {
        let apps: Vec<_> = rows.iter().map(|r| &r.app).collect();
        CqlPolicy::prices(self, &apps)
    }

    fn id(&self) -> String {
        "cql".into()
    }
}

impl PricingPolicy for PolicyArtifact {
    fn prices(&self, rows: &[DatasetRow]) -> Result<Vec<f64>> {
        match self {
            PolicyArtifact::Cql(p) => PricingPolicy::prices(p, rows),
            PolicyArtifact::Opt(p) | PolicyArtifact::OptFdpe(p) => p.prices(rows),
            PolicyArtifact::Behavioral => BehavioralPolicy.prices(rows),
        }
    }

    fn id(&self) -> String {
        match self {
            PolicyArtifact::Cql(p) => PricingPolicy::id(p),
            PolicyArtifact::Opt(p) | PolicyArtifact::OptFdpe(p) => p.id(),
            PolicyArtifact::Behavioral => BehavioralPolicy.id(),
        }
    }
}
