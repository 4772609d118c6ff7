//! Comparison policies: greedy profit optimization and behavioral replay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Dataset, DatasetRow, LoanApplication, Split};
use crate::response::{fit_response, NeuralFitConfig, PriceResponse, ResponseModel, ResponseVariant};
use crate::reward::{per_loan_profit, RewardParams, MAX_RATE, MIN_RATE};

pub const GRID_STEP: f64 = 0.01;
const GOLDEN_TOLERANCE: f64 = 1e-7;

/// Expected reward at `rate` under `model`.
pub fn expected_profit(app: &LoanApplication, rate: f64, model: &dyn PriceResponse, reward: &RewardParams) -> Result<f64> {
    Ok(model.accept_probability(app, rate) * per_loan_profit(app, rate, reward)?)
}

/// Rate in `bounds` maximizing expected reward: a dense grid at
/// [`GRID_STEP`], then golden-section search on the cells next to the best
/// grid point. Ties go to the lower rate.
pub fn optimize_price(
    app: &LoanApplication,
    model: &dyn PriceResponse,
    reward: &RewardParams,
    bounds: (f64, f64),
) -> Result<f64> {
    let (lo, hi) = bounds;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidConfig(format!("bad price bounds {bounds:?}")));
    }
    let cells = ((hi - lo) / GRID_STEP).round().max(1.0) as usize;
    let grid: Vec<f64> = (0..=cells)
        .map(|i| if i == cells { hi } else { lo + i as f64 * GRID_STEP })
        .collect();
    let probs = model.accept_probabilities(app, &grid);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, (&r, p)) in grid.iter().zip(&probs).enumerate() {
        let v = p * per_loan_profit(app, r, reward)?;
        if v > best.0 {
            best = (v, i);
        }
    }
    let i = best.1;
    let a = grid[i.saturating_sub(1)];
    let b = grid[(i + 1).min(cells)];
    let f = |r: f64| -> Result<f64> { expected_profit(app, r, model, reward) };
    let (r, v) = golden_section(a, b, &f)?;
    Ok(if v > best.0 { r } else { grid[i] })
}

/// Maximizes `f` on `[a, b]` assuming unimodality.
fn golden_section(mut a: f64, mut b: f64, f: &dyn Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > GOLDEN_TOLERANCE {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// A uniform pricing interface over logged rows.
pub trait PricingPolicy: Send + Sync {
    fn prices(&self, rows: &[DatasetRow]) -> Result<Vec<f64>>;
    fn id(&self) -> String;
}

/// Greedy profit maximization under a response model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptPolicy<M> {
    pub label: String,
    pub model: M,
    pub reward: RewardParams,
}

impl<M: PriceResponse> OptPolicy<M> {
    pub fn new(label: impl Into<String>, model: M, reward: RewardParams) -> Self {
        Self {
            label: label.into(),
            model,
            reward,
        }
    }

    pub fn price(&self, app: &LoanApplication) -> Result<f64> {
        optimize_price(app, &self.model, &self.reward, (MIN_RATE, MAX_RATE))
    }
}

impl<M: PriceResponse> PricingPolicy for OptPolicy<M> {
    fn prices(&self, rows: &[DatasetRow]) -> Result<Vec<f64>> {
        rows.par_iter().map(|r| self.price(&r.app)).collect()
    }

    fn id(&self) -> String {
        self.label.clone()
    }
}

/// π_Opt: fits `variant` on the training split only, then prices greedily.
pub fn opt_policy(
    dataset: &Dataset,
    variant: ResponseVariant,
    neural: &NeuralFitConfig,
    reward: &RewardParams,
) -> Result<OptPolicy<ResponseModel>> {
    let train = dataset.rows_in(Split::Train);
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let model = fit_response(variant, train, dataset.rows_in(Split::Val), neural)?;
    let label = match variant {
        ResponseVariant::Fdpe => "opt-fdpe".to_string(),
        ResponseVariant::Logistic => "opt".to_string(),
        v => format!("opt-{v}"),
    };
    Ok(OptPolicy::new(label, model, *reward))
}

/// π_β: replays the logged offered rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BehavioralPolicy;

impl PricingPolicy for BehavioralPolicy {
    fn prices(&self, rows: &[DatasetRow]) -> Result<Vec<f64>> {
        Ok(rows.iter().map(|r| r.offered_rate).collect())
    }

    fn id(&self) -> String {
        "behavioral".into()
    }
}

pub fn behavioral_policy() -> BehavioralPolicy {
    BehavioralPolicy
}

/// A fixed price list aligned with the rows it will be asked about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPrices {
    pub label: String,
    pub prices: Vec<f64>,
}

impl PricingPolicy for FixedPrices {
    fn prices(&self, rows: &[DatasetRow]) -> Result<Vec<f64>> {
        if rows.len() != self.prices.len() {
            return Err(Error::DimensionMismatch {
                context: "fixed price list",
                expected: self.prices.len(),
                got: rows.len(),
            });
        }
        Ok(self.prices.clone())
    }

    fn id(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::application::sample_application;
    use crate::response::{ConstantResponse, LogisticModel};
    use crate::market::FeatureSpec;

    #[test]
    fn always_accept_prices_at_the_cap() {
        let app = sample_application();
        let r = optimize_price(&app, &ConstantResponse(1.0), &RewardParams::default(), (MIN_RATE, MAX_RATE)).unwrap();
        assert_eq!(r, MAX_RATE);
    }

    #[test]
    fn never_accept_ties_to_the_floor() {
        let app = sample_application();
        let r = optimize_price(&app, &ConstantResponse(0.0), &RewardParams::default(), (MIN_RATE, MAX_RATE)).unwrap();
        assert_eq!(r, MIN_RATE);
    }

    #[test]
    fn fdpe_with_zero_interactions_prices_like_plain() {
        let mut c = vec![0.0; 14];
        c[0] = -0.66;
        c[7] = 2.4;
        let plain = LogisticModel::new(FeatureSpec::PLAIN, 2.0, c.clone()).unwrap();
        c.resize(27, 0.0);
        let fdpe = LogisticModel::new(FeatureSpec::FDPE, 2.0, c).unwrap();
        let rp = RewardParams::default();
        let mut app = sample_application();
        for amount in [6000.0, 15000.0, 60000.0] {
            app.amount = amount;
            let a = optimize_price(&app, &plain, &rp, (MIN_RATE, MAX_RATE)).unwrap();
            let b = optimize_price(&app, &fdpe, &rp, (MIN_RATE, MAX_RATE)).unwrap();
            assert!((a - b).abs() <= 0.005);
        }
    }
}
