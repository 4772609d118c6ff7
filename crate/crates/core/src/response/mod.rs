//! Price-response models `p(accept | application, rate)`.

pub mod logistic;
pub mod metrics;
pub mod neural;

pub use logistic::{fit_design, fit_logistic, DesignFit, FitDiagnostics, LogisticModel};
pub use metrics::{auc, log_likelihood, mcfadden_pseudo_r2};
pub use neural::{fit_neural_response, NeuralClassifier, NeuralFitConfig, NeuralFitReport, NeuralResponseModel};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{DatasetRow, FeatureSpec, LoanApplication};

/// Anything that can quote an accept probability.
pub trait PriceResponse: Send + Sync {
    fn accept_probability(&self, app: &LoanApplication, rate: f64) -> f64;

    /// Probabilities at many rates for one application. Models override
    /// this when batching is cheaper.
    fn accept_probabilities(&self, app: &LoanApplication, rates: &[f64]) -> Vec<f64> {
        rates.iter().map(|&r| self.accept_probability(app, r)).collect()
    }

    /// Short label used in reports.
    fn id(&self) -> String;
}

/// `p ≡ value` regardless of application or rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantResponse(pub f64);

impl PriceResponse for ConstantResponse {
    fn accept_probability(&self, _: &LoanApplication, _: f64) -> f64 {
        self.0
    }

    fn id(&self) -> String {
        format!("constant-{}", self.0)
    }
}

/// Which response model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ResponseVariant {
    Logistic,
    L2 { lambda: f64 },
    Fdpe,
    Neural,
}

impl ResponseVariant {
    /// The five evaluators of the sensitivity sweep.
    pub fn sweep_set() -> Vec<ResponseVariant> {
        vec![
            ResponseVariant::Logistic,
            ResponseVariant::L2 { lambda: 0.1 },
            ResponseVariant::L2 { lambda: 1.0 },
            ResponseVariant::Fdpe,
            ResponseVariant::Neural,
        ]
    }
}

impl fmt::Display for ResponseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseVariant::Logistic => f.write_str("logistic"),
            ResponseVariant::L2 { lambda } => write!(f, "l2:{lambda}"),
            ResponseVariant::Fdpe => f.write_str("fdpe"),
            ResponseVariant::Neural => f.write_str("neural"),
        }
    }
}

impl FromStr for ResponseVariant {
    type Err = Error;

    /// `logistic`, `fdpe`, `neural`, or `l2:<lambda>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ResponseVariant::Logistic),
            "fdpe" => Ok(ResponseVariant::Fdpe),
            "neural" => Ok(ResponseVariant::Neural),
            _ => s
                .strip_prefix("l2:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| *v >= 0.0)
                .map(|lambda| ResponseVariant::L2 { lambda })
                .ok_or_else(|| Error::InvalidConfig(format!("unknown response variant `{s}`"))),
        }
    }
}

/// A fitted response model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ResponseModel {
    Logistic(LogisticModel),
    Neural(NeuralResponseModel),
}

impl PriceResponse for ResponseModel {
    fn accept_probability(&self, app: &LoanApplication, rate: f64) -> f64 {
        match self {
            ResponseModel::Logistic(m) => m.accept_probability(app, rate),
            ResponseModel::Neural(m) => m.accept_probability(app, rate),
        }
    }

    fn accept_probabilities(&self, app: &LoanApplication, rates: &[f64]) -> Vec<f64> {
        match self {
            ResponseModel::Logistic(m) => m.accept_probabilities(app, rates),
            ResponseModel::Neural(m) => m.accept_probabilities(app, rates),
        }
    }

    fn id(&self) -> String {
        match self {
            ResponseModel::Logistic(m) => m.id(),
            ResponseModel::Neural(m) => m.id(),
        }
    }
}

impl ResponseModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fits `variant` on `train`; `val` is used only by the neural model.
pub fn fit_response(
    variant: ResponseVariant,
    train: &[DatasetRow],
    val: &[DatasetRow],
    neural: &NeuralFitConfig,
) -> Result<ResponseModel> {
    Ok(match variant {
        ResponseVariant::Logistic => ResponseModel::Logistic(fit_logistic(train, FeatureSpec::PLAIN, 0.0)?),
        ResponseVariant::L2 { lambda } => ResponseModel::Logistic(fit_logistic(train, FeatureSpec::PLAIN, lambda)?),
        ResponseVariant::Fdpe => ResponseModel::Logistic(fit_logistic(train, FeatureSpec::FDPE, 0.0)?),
        ResponseVariant::Neural => ResponseModel::Neural(fit_neural_response(train, val, neural)?),
    })
}
