//! Expected-profit reward of a single loan.
//!
//! `profit = (1 − PD)·(TotalPayment − CapitalCost) − PD·LGD·CapitalCost`,
//! where both payment totals are the undiscounted sum of a fixed-payment,
//! fully amortizing annuity: at the quoted APR for `TotalPayment`, at the
//! prime rate for `CapitalCost`. Rates are APR percent points, amounts are
//! dollars.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::LoanApplication;
use crate::scalar::Scalar;

/// Lowest and highest quotable APR.
pub const MIN_RATE: f64 = 2.5;
pub const MAX_RATE: f64 = 12.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    /// Loss given default, fraction of capital cost.
    pub lgd: f64,
    /// Payments per year.
    pub payment_frequency: u32,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            lgd: 0.5,
            payment_frequency: 12,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lgd) {
            return Err(Error::InvalidConfig(format!("lgd {} outside [0, 1]", self.lgd)));
        }
        if self.payment_frequency < 1 {
            return Err(Error::InvalidConfig("payment_frequency must be >= 1".into()));
        }
        Ok(())
    }
}

/// Undiscounted sum of all payments of a fixed-payment loan.
pub fn total_payment<T: Scalar>(amount: T, apr_percent: T, term_months: u32, payment_frequency: u32) -> Result<T> {
    if !amount.is_finite() || !apr_percent.is_finite() {
        return Err(Error::NonFinite("annuity inputs".into()));
    }
    if amount <= T::zero() || apr_percent < T::zero() || term_months == 0 || payment_frequency == 0 {
        return Err(Error::InvalidConfig(format!(
            "annuity needs amount > 0, apr >= 0, term >= 1 (got {amount}, {apr_percent}, {term_months})"
        )));
    }
    let n_payments = payment_count(term_months, payment_frequency);
    if apr_percent == T::zero() {
        return Ok(amount);
    }
    let r = apr_percent / T::of(100.0) / T::of(f64::from(payment_frequency));
    let n = T::of(n_payments as f64);
    // 1 − (1 + r)^−n, accurate for tiny r.
    let denom = -(-(n * r.ln_1p())).exp_m1();
    let payment = amount * r / denom;
    Ok(payment * n)
}

/// Per-period payment (for display and tests).
pub fn periodic_payment<T: Scalar>(amount: T, apr_percent: T, term_months: u32, payment_frequency: u32) -> Result<T> {
    let total = total_payment(amount, apr_percent, term_months, payment_frequency)?;
    Ok(total / T::of(payment_count(term_months, payment_frequency) as f64))
}

fn payment_count(term_months: u32, payment_frequency: u32) -> u64 {
    ((f64::from(term_months) * f64::from(payment_frequency) / 12.0).round() as u64).max(1)
}

/// Cost of funding the loan at the prime rate.
pub fn capital_cost<T: Scalar>(amount: T, prime_percent: T, term_months: u32, payment_frequency: u32) -> Result<T> {
    total_payment(amount, prime_percent, term_months, payment_frequency)
}

/// Profit of a funded loan from its raw parts. `pd` must lie in `[0, 1]`.
pub fn profit_from_parts<T: Scalar>(
    amount: T,
    apr_percent: T,
    prime_percent: T,
    term_months: u32,
    pd: T,
    params: &RewardParams,
) -> Result<T> {
    if !(pd >= T::zero() && pd <= T::one()) {
        return Err(Error::InvalidConfig(format!("pd {pd} outside [0, 1]")));
    }
    let tp = total_payment(amount, apr_percent, term_months, params.payment_frequency)?;
    let cc = capital_cost(amount, prime_percent, term_months, params.payment_frequency)?;
    let lgd = T::of(params.lgd);
    Ok((T::one() - pd) * (tp - cc) - pd * lgd * cc)
}

/// Profit if the applicant accepts `apr`.
pub fn per_loan_profit(app: &LoanApplication, apr: f64, params: &RewardParams) -> Result<f64> {
    profit_from_parts(app.amount, apr, app.prime_rate, app.term, app.pd, params)
}

/// Probability-weighted profit.
pub fn expected_reward(app: &LoanApplication, apr: f64, p_accept: f64, params: &RewardParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_accept) {
        return Err(Error::InvalidConfig(format!("accept probability {p_accept} outside [0, 1]")));
    }
    Ok(p_accept * per_loan_profit(app, apr, params)?)
}

/// Reward recorded in a lender's log: the profit if funded, else zero.
pub fn realized_reward(app: &LoanApplication, apr: f64, accepted: bool, params: &RewardParams) -> Result<f64> {
    if accepted {
        per_loan_profit(app, apr, params)
    } else {
        Ok(0.0)
    }
}

/// One step of the logged decision process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Scaled state features.
    pub state: Vec<f64>,
    /// Offered APR %.
    pub action: f64,
    /// Realized reward, dollars.
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Set on the final row of a split, whose successor is unknown.
    pub exclude_bootstrap: bool,
}
