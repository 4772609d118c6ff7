//! Model-based offline policy evaluation.

pub mod ablation;
pub mod plot;
pub mod report;

pub use ablation::{alpha_ablation, AblationRow, AblationTable};
pub use report::{summary_markdown, write_report_csv, ReportRow};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{optimize_price, PricingPolicy};
use crate::error::{Error, Result};
use crate::market::DatasetRow;
use crate::response::PriceResponse;
use crate::reward::{expected_reward, RewardParams, MAX_RATE, MIN_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub evaluator: String,
    pub n_rows: usize,
    /// Total expected reward, dollars.
    pub cumulative_reward: f64,
    pub per_row_rewards: Vec<f64>,
    pub prices: Vec<f64>,
    /// Versus the logged prices.
    pub mapd: f64,
    pub mean_price: f64,
    /// `(return − behavioral return) / behavioral return` under the same
    /// evaluator.
    pub uplift: f64,
    pub percent_of_optimal: Option<f64>,
}

impl EvalReport {
    /// Prefix sums of the per-row expected rewards.
    pub fn cumulative_curve(&self) -> Vec<f64> {
        self.per_row_rewards
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }
}

/// Mean absolute percentage deviation `mean |a − a_β| / a_β`.
pub fn mapd(prices: &[f64], behavioral: &[f64]) -> Result<f64> {
    if prices.len() != behavioral.len() {
        return Err(Error::DimensionMismatch {
            context: "mapd",
            expected: behavioral.len(),
            got: prices.len(),
        });
    }
    if prices.is_empty() {
        return Err(Error::Data("mapd of no prices".into()));
    }
    if behavioral.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::Data("behavioral prices must be > 0".into()));
    }
    Ok(prices.iter().zip(behavioral).map(|(a, b)| (a - b).abs() / b).sum::<f64>() / prices.len() as f64)
}

/// Per-row expected rewards of `prices` under `evaluator`.
pub fn expected_rewards(
    rows: &[DatasetRow],
    prices: &[f64],
    evaluator: &dyn PriceResponse,
    reward: &RewardParams,
) -> Result<Vec<f64>> {
    if rows.len() != prices.len() {
        return Err(Error::DimensionMismatch {
            context: "prices vs rows",
            expected: rows.len(),
            got: prices.len(),
        });
    }
    rows.par_iter()
        .zip(prices)
        .map(|(r, &a)| expected_reward(&r.app, a, evaluator.accept_probability(&r.app, a), reward))
        .collect()
}

/// Evaluates fixed prices; the rows' logged rates are the behavioral
/// reference.
pub fn evaluate_prices(
    policy: &str,
    prices: Vec<f64>,
    rows: &[DatasetRow],
    evaluator: &dyn PriceResponse,
    reward: &RewardParams,
) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    if prices.iter().any(|p| !(MIN_RATE..=MAX_RATE).contains(p)) {
        return Err(Error::Data(format!("policy {policy} priced outside [{MIN_RATE}, {MAX_RATE}]")));
    }
    let behavioral: Vec<f64> = rows.iter().map(|r| r.offered_rate).collect();
    let per_row = expected_rewards(rows, &prices, evaluator, reward)?;
    let base: f64 = expected_rewards(rows, &behavioral, evaluator, reward)?.iter().sum();
    let total: f64 = per_row.iter().sum();
    Ok(EvalReport {
        policy: policy.to_string(),
        evaluator: evaluator.id(),
        n_rows: rows.len(),
        cumulative_reward: total,
        mapd: mapd(&prices, &behavioral)?,
        mean_price: prices.iter().sum::<f64>() / prices.len() as f64,
        uplift: (total - base) / base,
        per_row_rewards: per_row,
        prices,
        percent_of_optimal: None,
    })
}

pub fn evaluate(
    policy: &dyn PricingPolicy,
    rows: &[DatasetRow],
    evaluator: &dyn PriceResponse,
    reward: &RewardParams,
) -> Result<EvalReport> {
    let prices = policy.prices(rows)?;
    evaluate_prices(&policy.id(), prices, rows, evaluator, reward)
}

/// Per-row optimal prices and rewards under the true model, computed once
/// and reused as the denominator of every % of optimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalReturn {
    pub prices: Vec<f64>,
    pub rewards: Vec<f64>,
    pub total: f64,
}

impl OptimalReturn {
    pub fn compute(rows: &[DatasetRow], truth: &dyn PriceResponse, reward: &RewardParams) -> Result<Self> {
        let prices = rows
            .par_iter()
            .map(|r| optimize_price(&r.app, truth, reward, (MIN_RATE, MAX_RATE)))
            .collect::<Result<Vec<_>>>()?;
        let rewards = expected_rewards(rows, &prices, truth, reward)?;
        let total = rewards.iter().sum();
        Ok(Self { prices, rewards, total })
    }

    /// `report` must have been produced under the same true model.
    pub fn attach(&self, report: &mut EvalReport) {
        report.percent_of_optimal = Some(report.cumulative_reward / self.total);
    }
}

/// `return(policy) / return(optimal)`, both under the true model.
pub fn percent_of_optimal(
    policy: &dyn PricingPolicy,
    rows: &[DatasetRow],
    truth: &dyn PriceResponse,
    reward: &RewardParams,
) -> Result<f64> {
    let opt = OptimalReturn::compute(rows, truth, reward)?;
    let mut rep = evaluate(policy, rows, truth, reward)?;
    opt.attach(&mut rep);
    Ok(rep.percent_of_optimal.expect("attached"))
}

/// One report per evaluator.
pub fn sensitivity_sweep(
    policy: &dyn PricingPolicy,
    rows: &[DatasetRow],
    evaluators: &[&dyn PriceResponse],
    reward: &RewardParams,
) -> Result<Vec<EvalReport>> {
    let prices = policy.prices(rows)?;
    evaluators
        .iter()
        .map(|e| evaluate_prices(&policy.id(), prices.clone(), rows, *e, reward))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpliftRange {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl UpliftRange {
    pub fn of(reports: &[EvalReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Data("no reports to summarize".into()));
        }
        let u: Vec<f64> = reports.iter().map(|r| r.uplift).collect();
        Ok(Self {
            min: u.iter().cloned().fold(f64::INFINITY, f64::min),
            mean: u.iter().sum::<f64>() / u.len() as f64,
            max: u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}
