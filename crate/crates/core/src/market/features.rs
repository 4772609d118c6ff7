//! Fixed feature encodings.
//!
//! Two encodings exist:
//!
//! * the **response design** used by every logistic price-response model and
//!   by the synthetic demand generator: the rate in raw APR points, six
//!   continuous terms standardized with fixed constants, and one-hot
//!   indicators for car type, partner bin and tier with reference levels
//!   `N`, `1` and `1`. FDPE models append `rate × term` for every non-rate
//!   term.
//! * the **state vector** consumed by the pricing agent: every observable
//!   field, categoricals one-hot in the order of their `ALL` constants.

use serde::{Deserialize, Serialize};

use super::application::{CarType, LoanApplication, LoanType, PartnerBin, StateCode, Tier};

/// Terms of the response design, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseTerm {
    Rate,
    PrimeRate,
    CompetitionRate,
    PreviousRate,
    LogAmount,
    LogFico,
    Term,
    CarTypeU,
    CarTypeR,
    PartnerBin2,
    PartnerBin3,
    Tier2,
    Tier3,
    Tier7,
}

impl ResponseTerm {
    pub const ALL: [ResponseTerm; 14] = [
        ResponseTerm::Rate,
        ResponseTerm::PrimeRate,
        ResponseTerm::CompetitionRate,
        ResponseTerm::PreviousRate,
        ResponseTerm::LogAmount,
        ResponseTerm::LogFico,
        ResponseTerm::Term,
        ResponseTerm::CarTypeU,
        ResponseTerm::CarTypeR,
        ResponseTerm::PartnerBin2,
        ResponseTerm::PartnerBin3,
        ResponseTerm::Tier2,
        ResponseTerm::Tier3,
        ResponseTerm::Tier7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResponseTerm::Rate => "rate",
            ResponseTerm::PrimeRate => "prime_rate",
            ResponseTerm::CompetitionRate => "competition_rate",
            ResponseTerm::PreviousRate => "previous_rate",
            ResponseTerm::LogAmount => "log_amount",
            ResponseTerm::LogFico => "log_fico",
            ResponseTerm::Term => "term",
            ResponseTerm::CarTypeU => "car_type_U",
            ResponseTerm::CarTypeR => "car_type_R",
            ResponseTerm::PartnerBin2 => "partner_bin_2",
            ResponseTerm::PartnerBin3 => "partner_bin_3",
            ResponseTerm::Tier2 => "tier_2",
            ResponseTerm::Tier3 => "tier_3",
            ResponseTerm::Tier7 => "tier_7",
        }
    }

    /// Value of this term for an application quoted at `rate`.
    pub fn value(self, app: &LoanApplication, rate: f64) -> f64 {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            ResponseTerm::Rate => rate,
            ResponseTerm::PrimeRate => (app.prime_rate - 4.5) / 0.5,
            ResponseTerm::CompetitionRate => (app.competition_rate - 7.0) / 1.0,
            // Centered within refinances so the R indicator stays identified.
            ResponseTerm::PreviousRate => {
                if app.loan_type == LoanType::Refinance {
                    (app.previous_rate - 9.0) / 2.0
                } else {
                    0.0
                }
            }
            ResponseTerm::LogAmount => (app.amount.ln() - 20_000f64.ln()) / 0.5,
            ResponseTerm::LogFico => (f64::from(app.fico).ln() - 700f64.ln()) / 0.07,
            ResponseTerm::Term => (f64::from(app.term) - 54.0) / 15.0,
            ResponseTerm::CarTypeU => ind(app.car_type == CarType::U),
            ResponseTerm::CarTypeR => ind(app.car_type == CarType::R),
            ResponseTerm::PartnerBin2 => ind(app.partner_bin == PartnerBin::P2),
            ResponseTerm::PartnerBin3 => ind(app.partner_bin == PartnerBin::P3),
            ResponseTerm::Tier2 => ind(app.tier == Tier::T2),
            ResponseTerm::Tier3 => ind(app.tier == Tier::T3),
            ResponseTerm::Tier7 => ind(app.tier == Tier::T7),
        }
    }
}

/// Term layout of a logistic design: the base terms, optionally followed by
/// one `rate × term` interaction per non-rate term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub price_interactions: bool,
}

impl FeatureSpec {
    pub const PLAIN: FeatureSpec = FeatureSpec {
        price_interactions: false,
    };
    pub const FDPE: FeatureSpec = FeatureSpec {
        price_interactions: true,
    };

    pub fn len(&self) -> usize {
        let base = ResponseTerm::ALL.len();
        if self.price_interactions {
            2 * base - 1
        } else {
            base
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = ResponseTerm::ALL.iter().map(|t| t.name().to_string()).collect();
        if self.price_interactions {
            out.extend(ResponseTerm::ALL[1..].iter().map(|t| format!("rate:{}", t.name())));
        }
        out
    }

    /// Design row (no intercept column).
    pub fn row(&self, app: &LoanApplication, rate: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.row_into(app, rate, &mut out);
        out
    }

    pub fn row_into(&self, app: &LoanApplication, rate: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(ResponseTerm::ALL.iter().map(|t| t.value(app, rate)));
        if self.price_interactions {
            for j in 1..ResponseTerm::ALL.len() {
                out.push(rate * out[j]);
            }
        }
    }

    /// Splits the linear predictor `β·x` into `(offset, slope)` such that it
    /// equals `offset + slope·rate`. Valid because every term is at most
    /// linear in the rate.
    pub fn offset_and_slope(&self, coefficients: &[f64], app: &LoanApplication) -> (f64, f64) {
        let base = ResponseTerm::ALL.len();
        let mut offset = 0.0;
        let mut slope = coefficients[0];
        for j in 1..base {
            let v = ResponseTerm::ALL[j].value(app, 0.0);
            offset += coefficients[j] * v;
            if self.price_interactions {
                slope += coefficients[base + j - 1] * v;
            }
        }
        (offset, slope)
    }
}

/// Names of the raw state vector columns, in order.
pub fn state_feature_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "term",
        "amount",
        "fico",
        "pd",
        "previous_rate",
        "competition_rate",
        "prime_rate",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend(Tier::ALL.iter().map(|t| format!("tier_{t}")));
    names.extend(LoanType::ALL.iter().map(|t| format!("type_{t}")));
    names.extend(CarType::ALL.iter().map(|t| format!("car_type_{t}")));
    names.extend(PartnerBin::ALL.iter().map(|t| format!("partner_bin_{t}")));
    names.extend(StateCode::ALL.iter().map(|t| format!("state_{t}")));
    names.extend(
        ["months", "day_of_week", "month_of_year", "days_since_app"]
            .iter()
            .map(|s| s.to_string()),
    );
    names
}

pub fn state_dim() -> usize {
    7 + Tier::ALL.len() + LoanType::ALL.len() + CarType::ALL.len() + PartnerBin::ALL.len() + StateCode::ALL.len() + 4
}

/// Unscaled state vector of an application.
pub fn state_features(app: &LoanApplication) -> Vec<f64> {
    let mut v = Vec::with_capacity(state_dim());
    v.extend_from_slice(&[
        f64::from(app.term),
        app.amount,
        f64::from(app.fico),
        app.pd,
        app.previous_rate,
        app.competition_rate,
        app.prime_rate,
    ]);
    fn one_hot<C: PartialEq + Copy>(v: &mut Vec<f64>, all: &[C], x: C) {
        v.extend(all.iter().map(|c| if *c == x { 1.0 } else { 0.0 }));
    }
    one_hot(&mut v, &Tier::ALL, app.tier);
    one_hot(&mut v, &LoanType::ALL, app.loan_type);
    one_hot(&mut v, &CarType::ALL, app.car_type);
    one_hot(&mut v, &PartnerBin::ALL, app.partner_bin);
    one_hot(&mut v, &StateCode::ALL, app.state_code);
    v.extend_from_slice(&[
        f64::from(app.months_since_start),
        f64::from(app.day_of_week),
        f64::from(app.month_of_year),
        f64::from(app.days_since_app),
    ]);
    v
}
