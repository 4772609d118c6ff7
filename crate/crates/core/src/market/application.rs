use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Credit tier assigned from a (noisy) FICO band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "1")]
    T1,
    #[serde(rename = "2")]
    T2,
    #[serde(rename = "3")]
    T3,
    #[serde(rename = "7")]
    T7,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::T1, Tier::T2, Tier::T3, Tier::T7];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> u8 {
        match self {
            Tier::T1 => 1,
            Tier::T2 => 2,
            Tier::T3 => 3,
            Tier::T7 => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoanType {
    Finance,
    Refinance,
}

impl LoanType {
    pub const ALL: [LoanType; 2] = [LoanType::Finance, LoanType::Refinance];
}

/// New, used, or refinanced vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CarType {
    N,
    U,
    R,
}

impl CarType {
    pub const ALL: [CarType; 3] = [CarType::N, CarType::U, CarType::R];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartnerBin {
    #[serde(rename = "1")]
    P1,
    #[serde(rename = "2")]
    P2,
    #[serde(rename = "3")]
    P3,
}

impl PartnerBin {
    pub const ALL: [PartnerBin; 3] = [PartnerBin::P1, PartnerBin::P2, PartnerBin::P3];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateCode {
    CA,
    TX,
    FL,
    NY,
    /// Any other state.
    OT,
}

impl StateCode {
    pub const ALL: [StateCode; 5] = [
        StateCode::CA,
        StateCode::TX,
        StateCode::FL,
        StateCode::NY,
        StateCode::OT,
    ];
}

macro_rules! display_via_serde {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(s.as_str().ok_or(fmt::Error)?)
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                serde_json::from_value(serde_json::Value::String(s.to_string()))
                    .map_err(|_| Error::Data(format!("invalid {} `{s}`", stringify!($t))))
            }
        }
    )*};
}

display_via_serde!(Tier, LoanType, CarType, PartnerBin, StateCode);

/// One loan application: the observable state plus generator-side latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanApplication {
    /// Global chronological index.
    pub app_index: u64,
    /// Months.
    pub term: u32,
    /// Dollars, at least [`MIN_AMOUNT`].
    pub amount: f64,
    pub fico: u32,
    /// Probability of default, strictly inside (0, 1).
    pub pd: f64,
    /// APR %; zero unless refinancing.
    pub previous_rate: f64,
    pub competition_rate: f64,
    pub prime_rate: f64,
    pub tier: Tier,
    pub loan_type: LoanType,
    pub car_type: CarType,
    pub partner_bin: PartnerBin,
    pub state_code: StateCode,
    pub months_since_start: u32,
    /// 0 = Monday.
    pub day_of_week: u8,
    /// 1..=12.
    pub month_of_year: u8,
    pub days_since_app: u32,
    /// Generator-only latent segment. Never part of the observable state.
    pub latent_segment: u32,
}

pub const MIN_AMOUNT: f64 = 5_000.0;

impl LoanApplication {
    pub fn is_refinance(&self) -> bool {
        self.loan_type == LoanType::Refinance
    }

    /// Checks the structural invariants of a generated or loaded row.
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Data(format!("application {}: {m}", self.app_index)));
        if !(self.pd > 0.0 && self.pd < 1.0) {
            return bad("pd outside (0, 1)");
        }
        if !(self.amount >= MIN_AMOUNT) {
            return bad("amount below 5000");
        }
        if !(self.previous_rate >= 0.0 && self.competition_rate >= 0.0 && self.prime_rate >= 0.0) {
            return bad("negative rate");
        }
        let refi = self.loan_type == LoanType::Refinance;
        if refi != (self.car_type == CarType::R) || refi != (self.previous_rate > 0.0) {
            return bad("car type R, refinance, and previous rate disagree");
        }
        if self.term == 0 || self.day_of_week > 6 || !(1..=12).contains(&self.month_of_year) {
            return bad("calendar or term field out of range");
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) fn sample_application() -> LoanApplication {
    LoanApplication {
        app_index: 0,
        term: 36,
        amount: 10_000.0,
        fico: 720,
        pd: 0.05,
        previous_rate: 0.0,
        competition_rate: 6.0,
        prime_rate: 4.0,
        tier: Tier::T2,
        loan_type: LoanType::Finance,
        car_type: CarType::N,
        partner_bin: PartnerBin::P1,
        state_code: StateCode::CA,
        months_since_start: 3,
        day_of_week: 2,
        month_of_year: 10,
        days_since_app: 1,
        latent_segment: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_codes_round_trip() {
        assert_eq!(Tier::T7.to_string(), "7");
        assert_eq!("7".parse::<Tier>().unwrap(), Tier::T7);
        assert_eq!("Refinance".parse::<LoanType>().unwrap(), LoanType::Refinance);
        assert_eq!(PartnerBin::P2.to_string(), "2");
        assert!("Q".parse::<CarType>().is_err());
    }

    #[test]
    fn refinance_consistency_is_enforced() {
        let mut a = sample_application();
        a.validate().unwrap();
        a.car_type = CarType::R;
        assert!(a.validate().is_err());
        a.loan_type = LoanType::Refinance;
        a.previous_rate = 9.0;
        a.validate().unwrap();
    }
}
