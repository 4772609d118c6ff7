//! Ground-truth price-response functions of the synthetic markets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::application::LoanApplication;
use super::config::DemandFamily;
use super::features::{FeatureSpec, ResponseTerm};
use crate::error::{Error, Result};
use crate::nn::{Activation, Matrix, Network};
use crate::response::PriceResponse;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic demand over a [`FeatureSpec`] design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDemand {
    pub spec: FeatureSpec,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Upper bound on the state-dependent price slope; keeps FDPE demand
    /// strictly decreasing in the rate.
    pub max_price_slope: Option<f64>,
}

impl LinearDemand {
    pub fn new(spec: FeatureSpec, intercept: f64, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                context: "demand coefficients",
                expected: spec.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            spec,
            intercept,
            coefficients,
            max_price_slope: None,
        })
    }

    pub fn logit(&self, app: &LoanApplication, rate: f64) -> f64 {
        let (offset, mut slope) = self.spec.offset_and_slope(&self.coefficients, app);
        if let Some(cap) = self.max_price_slope {
            slope = slope.min(cap);
        }
        self.intercept + offset + slope * rate
    }
}

/// Family-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthParams {
    Logistic {
        demand: LinearDemand,
    },
    LogisticFdpe {
        demand: LinearDemand,
    },
    /// One demand per latent segment.
    Segmented {
        segments: Vec<LinearDemand>,
    },
    /// Coefficients move linearly from `train` (first application) to
    /// `test` (application `horizon` and later).
    TimeVarying {
        train: LinearDemand,
        test: LinearDemand,
        horizon: u64,
    },
    /// Logistic backbone plus a fixed tanh network over the design row.
    NeuralNet {
        backbone: LinearDemand,
        network: Network<f64>,
        amplitude: f64,
    },
}

impl TruthParams {
    pub fn family(&self) -> DemandFamily {
        match self {
            TruthParams::Logistic { .. } => DemandFamily::Logistic,
            TruthParams::LogisticFdpe { .. } => DemandFamily::LogisticFdpe,
            TruthParams::Segmented { .. } => DemandFamily::Segmented,
            TruthParams::TimeVarying { .. } => DemandFamily::TimeVarying,
            TruthParams::NeuralNet { .. } => DemandFamily::NeuralNet,
        }
    }

    fn logit(&self, app: &LoanApplication, rate: f64) -> f64 {
        match self {
            TruthParams::Logistic { demand } | TruthParams::LogisticFdpe { demand } => demand.logit(app, rate),
            TruthParams::Segmented { segments } => {
                let k = (app.latent_segment as usize).min(segments.len() - 1);
                segments[k].logit(app, rate)
            }
            TruthParams::TimeVarying { train, test, horizon } => {
                let w = if *horizon == 0 {
                    1.0
                } else {
                    (app.app_index as f64 / *horizon as f64).min(1.0)
                };
                (1.0 - w) * train.logit(app, rate) + w * test.logit(app, rate)
            }
            TruthParams::NeuralNet {
                backbone,
                network,
                amplitude,
            } => {
                let mut x = FeatureSpec::PLAIN.row(app, rate);
                x[0] = (rate - 7.5) / 2.5;
                let input = Matrix::from_vec(1, x.len(), x).expect("sized");
                let out = network.predict(&input).expect("truth network input").get(0, 0);
                backbone.logit(app, rate) + amplitude * out
            }
        }
    }
}

/// A calibrated ground-truth demand model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthModel {
    pub family: DemandFamily,
    /// Common logit shift found by intercept calibration.
    pub intercept_shift: f64,
    pub params: TruthParams,
}

impl TruthModel {
    pub fn new(params: TruthParams) -> Self {
        Self {
            family: params.family(),
            intercept_shift: 0.0,
            params,
        }
    }

    pub fn logit(&self, app: &LoanApplication, rate: f64) -> f64 {
        self.intercept_shift + self.params.logit(app, rate)
    }
}

impl PriceResponse for TruthModel {
    fn accept_probability(&self, app: &LoanApplication, rate: f64) -> f64 {
        sigmoid(self.logit(app, rate))
    }

    fn id(&self) -> String {
        format!("truth-{}", self.family)
    }
}

/// `p(accept | app, rate)` under the named family's parameters.
pub fn true_accept_probability(
    family: DemandFamily,
    params: &TruthParams,
    intercept_shift: f64,
    app: &LoanApplication,
    rate: f64,
) -> Result<f64> {
    if params.family() != family {
        return Err(Error::InvalidConfig(format!(
            "parameters for {} passed as {}",
            params.family(),
            family
        )));
    }
    Ok(sigmoid(intercept_shift + params.logit(app, rate)))
}

/// Base coefficients on the plain design, in [`ResponseTerm::ALL`] order.
pub fn base_coefficients() -> Vec<f64> {
    ResponseTerm::ALL
        .iter()
        .map(|t| match t {
            ResponseTerm::Rate => -0.66,
            ResponseTerm::PrimeRate => 0.41,
            ResponseTerm::CompetitionRate => 0.16,
            ResponseTerm::PreviousRate => 0.10,
            ResponseTerm::LogAmount => -0.90,
            ResponseTerm::LogFico => -0.31,
            ResponseTerm::Term => 0.78,
            ResponseTerm::CarTypeU => 2.43,
            ResponseTerm::CarTypeR => 0.29,
            ResponseTerm::PartnerBin2 => -1.19,
            ResponseTerm::PartnerBin3 => -0.33,
            ResponseTerm::Tier2 => -0.14,
            ResponseTerm::Tier3 => -0.035,
            ResponseTerm::Tier7 => 0.32,
        })
        .collect()
}

/// Rate around which re-parameterized demands agree with the base demand.
const PIVOT_RATE: f64 = 7.0;

fn index_of(term: ResponseTerm) -> usize {
    ResponseTerm::ALL.iter().position(|t| *t == term).expect("term")
}

fn fdpe_demand() -> LinearDemand {
    let base = base_coefficients();
    let spec = FeatureSpec::FDPE;
    let mut coefficients = base.clone();
    coefficients.resize(spec.len(), 0.0);
    let interactions = [
        (ResponseTerm::CarTypeU, 0.15),
        (ResponseTerm::PartnerBin2, -0.15),
        (ResponseTerm::LogFico, -0.08),
        (ResponseTerm::LogAmount, -0.06),
        (ResponseTerm::CompetitionRate, 0.05),
        (ResponseTerm::Term, -0.05),
        (ResponseTerm::Tier7, 0.15),
    ];
    for (term, gamma) in interactions {
        let j = index_of(term);
        coefficients[ResponseTerm::ALL.len() + j - 1] = gamma;
        // Keep the demand level at the pivot rate unchanged.
        coefficients[j] -= PIVOT_RATE * gamma;
    }
    let mut d = LinearDemand::new(spec, 0.0, coefficients).expect("sized");
    d.max_price_slope = Some(-0.05);
    d
}

/// Price-sensitivity multiplier of segment `k` out of `n`.
fn segment_multiplier(k: usize, n: usize) -> f64 {
    if n == 1 {
        return 1.0;
    }
    let t = k as f64 / (n - 1) as f64;
    1.5 + (0.45 - 1.5) * t
}

fn segmented_demands(n: usize) -> Vec<LinearDemand> {
    let base = base_coefficients();
    let rate = index_of(ResponseTerm::Rate);
    let car_u = index_of(ResponseTerm::CarTypeU);
    (0..n)
        .map(|k| {
            let mut c = base.clone();
            let m = segment_multiplier(k, n);
            c[rate] = base[rate] * m;
            let t = if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
            c[car_u] = base[car_u] + (t - 0.5) * 1.2;
            let intercept = -PIVOT_RATE * (c[rate] - base[rate]);
            LinearDemand::new(FeatureSpec::PLAIN, intercept, c).expect("sized")
        })
        .collect()
}

fn drifted_demand(drift: f64) -> LinearDemand {
    let base = base_coefficients();
    let mut c = base.clone();
    let shifts = [
        (ResponseTerm::Rate, -0.35),
        (ResponseTerm::CarTypeU, -0.8),
        (ResponseTerm::PartnerBin2, 0.6),
        (ResponseTerm::CompetitionRate, 0.3),
    ];
    for (term, d) in shifts {
        c[index_of(term)] += drift * d;
    }
    let intercept = -PIVOT_RATE * drift * -0.35;
    LinearDemand::new(FeatureSpec::PLAIN, intercept, c).expect("sized")
}

/// Default (uncalibrated) parameters of each family.
pub fn default_truth<R: Rng + ?Sized>(
    family: DemandFamily,
    n_segments: usize,
    drift_magnitude: f64,
    n_applications: usize,
    rng: &mut R,
) -> Result<TruthParams> {
    let base = || LinearDemand::new(FeatureSpec::PLAIN, 0.0, base_coefficients()).expect("sized");
    Ok(match family {
        DemandFamily::Logistic => TruthParams::Logistic { demand: base() },
        DemandFamily::LogisticFdpe => TruthParams::LogisticFdpe { demand: fdpe_demand() },
        DemandFamily::Segmented => TruthParams::Segmented {
            segments: segmented_demands(n_segments),
        },
        DemandFamily::TimeVarying => TruthParams::TimeVarying {
            train: base(),
            test: drifted_demand(drift_magnitude),
            horizon: n_applications.saturating_sub(1) as u64,
        },
        DemandFamily::NeuralNet => {
            let mut network = Network::mlp(ResponseTerm::ALL.len(), &[16, 16], 1, Activation::Tanh, 0.0, rng)?;
            // Wider first layer weights give visible curvature.
            for w in network.layers_mut()[0].weights.as_mut_slice() {
                *w *= 1.5;
            }
            TruthParams::NeuralNet {
                backbone: base(),
                network,
                amplitude: 1.5,
            }
        }
    })
}
