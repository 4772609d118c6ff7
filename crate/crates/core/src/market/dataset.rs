//! Logged datasets: accept sampling, intercept calibration, chronological
//! splits and the CSV format.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::application::{CarType, LoanApplication, LoanType, PartnerBin, StateCode, Tier};
use super::demand::{sigmoid, TruthModel};
use super::{streams, substream};
use crate::error::{Error, Result};
use crate::response::PriceResponse;
use crate::reward::{realized_reward, RewardParams};

/// Default train/val/test fractions.
pub const DEFAULT_SPLIT: [f64; 3] = [0.86, 0.03, 0.11];

const CALIBRATION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub app: LoanApplication,
    pub offered_rate: f64,
    pub accept: bool,
    pub realized_reward: f64,
    pub split: Split,
    /// True accept probability at the offered rate (generator latent).
    pub truth_accept_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
}

/// Uniform draws shared by calibration and sampling, so the calibrated
/// accept rate is exactly the one the dataset ends up with.
fn accept_uniforms(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, streams::ACCEPTS);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn check_aligned(apps: &[LoanApplication], prices: &[f64]) -> Result<()> {
    if apps.len() != prices.len() {
        return Err(Error::DimensionMismatch {
            context: "applications vs prices",
            expected: apps.len(),
            got: prices.len(),
        });
    }
    if apps.is_empty() {
        return Err(Error::Data("no applications".into()));
    }
    Ok(())
}

/// Finds the common logit shift that makes the sampled accept rate hit
/// `target` (bisection on the intercept), and stores it in `truth`.
pub fn calibrate_intercept(
    truth: &mut TruthModel,
    apps: &[LoanApplication],
    prices: &[f64],
    target: f64,
    seed: u64,
) -> Result<f64> {
    check_aligned(apps, prices)?;
    truth.intercept_shift = 0.0;
    let base: Vec<f64> = apps.par_iter().zip(prices).map(|(a, &r)| truth.logit(a, r)).collect();
    let u = accept_uniforms(apps.len(), seed);
    let rate_at = |shift: f64| {
        let hits = base.iter().zip(&u).filter(|(z, u)| **u < sigmoid(shift + **z)).count();
        hits as f64 / base.len() as f64
    };
    let (mut lo, mut hi) = (-40.0, 40.0);
    let mut shift = 0.0;
    let mut rate = rate_at(shift);
    for _ in 0..200 {
        if (rate - target).abs() < 1e-3 {
            break;
        }
        if rate < target {
            lo = shift;
        } else {
            hi = shift;
        }
        shift = 0.5 * (lo + hi);
        rate = rate_at(shift);
        if hi - lo < 1e-12 {
            break;
        }
    }
    if (rate - target).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::Calibration(format!(
            "accept rate {rate:.4} after calibration, target {target:.4}"
        )));
    }
    truth.intercept_shift = shift;
    log::debug!("calibrated intercept shift {shift:.4}, accept rate {rate:.4}");
    Ok(shift)
}

/// Draws `accept ~ Bernoulli(p_true)` per row and records realized rewards.
/// All rows start in the train split.
pub fn sample_accepts_and_build_dataset(
    apps: &[LoanApplication],
    prices: &[f64],
    truth: &dyn PriceResponse,
    reward: &RewardParams,
    seed: u64,
) -> Result<Dataset> {
    check_aligned(apps, prices)?;
    let u = accept_uniforms(apps.len(), seed);
    let rows = apps
        .iter()
        .zip(prices)
        .zip(u)
        .map(|((app, &rate), u)| {
            let p = truth.accept_probability(app, rate);
            let accept = u < p;
            Ok(DatasetRow {
                app: app.clone(),
                offered_rate: rate,
                accept,
                realized_reward: realized_reward(app, rate, accept, reward)?,
                split: Split::Train,
                truth_accept_prob: p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { rows })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Tags contiguous chronological train/val/test blocks. Train and val
    /// get `round(f·n)` rows, test the remainder.
    pub fn split(&mut self, fractions: [f64; 3]) -> Result<()> {
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
        }
        let n = self.rows.len();
        let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        let sizes = [n_train, n_val, n - n_train - n_val];
        for (k, split) in Split::ALL.iter().enumerate() {
            if fractions[k] > 0.0 && sizes[k] == 0 {
                return Err(Error::EmptySplit(split.name()));
            }
        }
        for (i, row) in self.rows.iter_mut().enumerate() {
            row.split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        Ok(())
    }

    /// Rows of one split. Splits are contiguous, so this is a slice.
    pub fn rows_in(&self, split: Split) -> &[DatasetRow] {
        let start = self.rows.iter().position(|r| r.split == split);
        match start {
            None => &[],
            Some(s) => {
                let len = self.rows[s..].iter().take_while(|r| r.split == split).count();
                &self.rows[s..s + len]
            }
        }
    }

    pub fn accept_rate(&self) -> f64 {
        self.rows.iter().filter(|r| r.accept).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn mean_realized_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.realized_reward).sum::<f64>() / self.rows.len().max(1) as f64
    }

    /// Checks ordering, contiguity and per-row invariants.
    pub fn validate(&self) -> Result<()> {
        for w in self.rows.windows(2) {
            if w[1].app.app_index <= w[0].app.app_index {
                return Err(Error::Data("rows not ordered by app_index".into()));
            }
            if w[1].split < w[0].split {
                return Err(Error::Data("splits are not chronological".into()));
            }
        }
        for r in &self.rows {
            r.app.validate()?;
            if !r.offered_rate.is_finite() || !r.realized_reward.is_finite() {
                return Err(Error::Data(format!("non-finite value in row {}", r.app.app_index)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(CsvRow::from(r))?;
        }
        w.flush().map_err(|e| Error::Data(format!("csv flush: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let rows = rd
            .deserialize::<CsvRow>()
            .map(|r| Ok(DatasetRow::from(r?)))
            .collect::<Result<Vec<_>>>()?;
        let ds = Dataset { rows };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// On-disk layout, columns named after the data dictionary.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    app_index: u64,
    #[serde(rename = "Term")]
    term: u32,
    #[serde(rename = "Amount")]
    amount: f64,
    #[serde(rename = "FICO")]
    fico: u32,
    #[serde(rename = "PD")]
    pd: f64,
    #[serde(rename = "PreviousRate")]
    previous_rate: f64,
    #[serde(rename = "CompetitionRate")]
    competition_rate: f64,
    #[serde(rename = "PrimeRate")]
    prime_rate: f64,
    #[serde(rename = "Tier")]
    tier: Tier,
    #[serde(rename = "Type")]
    loan_type: LoanType,
    #[serde(rename = "CarType")]
    car_type: CarType,
    #[serde(rename = "PartnerBin")]
    partner_bin: PartnerBin,
    #[serde(rename = "State")]
    state_code: StateCode,
    #[serde(rename = "Months")]
    months_since_start: u32,
    #[serde(rename = "DayOfWeek")]
    day_of_week: u8,
    #[serde(rename = "MonthOfYear")]
    month_of_year: u8,
    #[serde(rename = "DaysSinceApp")]
    days_since_app: u32,
    offered_rate: f64,
    accept: u8,
    realized_reward: f64,
    split: Split,
    _truth_segment: u32,
    _truth_accept_prob: f64,
}

impl From<&DatasetRow> for CsvRow {
    fn from(r: &DatasetRow) -> Self {
        let a = &r.app;
        CsvRow {
            app_index: a.app_index,
            term: a.term,
            amount: a.amount,
            fico: a.fico,
            pd: a.pd,
            previous_rate: a.previous_rate,
            competition_rate: a.competition_rate,
            prime_rate: a.prime_rate,
            tier: a.tier,
            loan_type: a.loan_type,
            car_type: a.car_type,
            partner_bin: a.partner_bin,
            state_code: a.state_code,
            months_since_start: a.months_since_start,
            day_of_week: a.day_of_week,
            month_of_year: a.month_of_year,
            days_since_app: a.days_since_app,
            offered_rate: r.offered_rate,
            accept: u8::from(r.accept),
            realized_reward: r.realized_reward,
            split: r.split,
            _truth_segment: a.latent_segment,
            _truth_accept_prob: r.truth_accept_prob,
        }
    }
}

impl From<CsvRow> for DatasetRow {
    fn from(c: CsvRow) -> Self {
        DatasetRow {
            app: LoanApplication {
                app_index: c.app_index,
                term: c.term,
                amount: c.amount,
                fico: c.fico,
                pd: c.pd,
                previous_rate: c.previous_rate,
                competition_rate: c.competition_rate,
                prime_rate: c.prime_rate,
                tier: c.tier,
                loan_type: c.loan_type,
                car_type: c.car_type,
                partner_bin: c.partner_bin,
                state_code: c.state_code,
                months_since_start: c.months_since_start,
                day_of_week: c.day_of_week,
                month_of_year: c.month_of_year,
                days_since_app: c.days_since_app,
                latent_segment: c._truth_segment,
            },
            offered_rate: c.offered_rate,
            accept: c.accept != 0,
            realized_reward: c.realized_reward,
            split: c.split,
            truth_accept_prob: c._truth_accept_prob,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::demand::LinearDemand;
    use crate::market::features::FeatureSpec;
    use crate::market::{behavioral_prices, generate_applications, BehavioralRule, MarketConfig, TruthParams};

    fn constant_truth(intercept: f64) -> TruthModel {
        let d = LinearDemand::new(FeatureSpec::PLAIN, intercept, vec![0.0; 14]).unwrap();
        TruthModel::new(TruthParams::Logistic { demand: d })
    }

    fn small(n: usize) -> (Vec<LoanApplication>, Vec<f64>) {
        let cfg = MarketConfig {
            n_applications: n,
            seed: 5,
            ..Default::default()
        };
        let apps = generate_applications(&cfg).unwrap();
        let prices = behavioral_prices(&apps, &BehavioralRule::default(), 0.75, 5);
        (apps, prices)
    }

    #[test]
    fn forced_probabilities() {
        let (apps, prices) = small(300);
        let r = RewardParams::default();
        let all = sample_accepts_and_build_dataset(&apps, &prices, &constant_truth(1e3), &r, 1).unwrap();
        assert!(all.rows.iter().all(|r| r.accept));
        let none = sample_accepts_and_build_dataset(&apps, &prices, &constant_truth(-1e3), &r, 1).unwrap();
        assert!(none.rows.iter().all(|r| !r.accept && r.realized_reward == 0.0));
    }

    #[test]
    fn split_sizes_and_errors() {
        let (apps, prices) = small(100);
        let mut ds =
            sample_accepts_and_build_dataset(&apps, &prices, &constant_truth(0.0), &RewardParams::default(), 1).unwrap();
        ds.split([0.8, 0.1, 0.1]).unwrap();
        assert_eq!(ds.rows_in(Split::Train).len(), 80);
        assert_eq!(ds.rows_in(Split::Val).len(), 10);
        assert_eq!(ds.rows_in(Split::Test).len(), 10);
        assert_eq!(ds.rows_in(Split::Val)[0].app.app_index, 80);
        ds.validate().unwrap();
        ds.split([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ds.rows_in(Split::Train).len(), 100);
        assert!(ds.rows_in(Split::Test).is_empty());
        assert!(matches!(ds.split([0.999, 0.001, 0.0]), Err(Error::EmptySplit("val"))));
        assert!(ds.split([0.5, 0.2, 0.2]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let (apps, prices) = small(200);
        let mut ds =
            sample_accepts_and_build_dataset(&apps, &prices, &constant_truth(-0.5), &RewardParams::default(), 2).unwrap();
        ds.split(DEFAULT_SPLIT).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("app_index,Term,Amount,FICO,PD,PreviousRate,CompetitionRate,PrimeRate,Tier,Type,"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn calibration_hits_target() {
        let (apps, prices) = small(4000);
        let mut truth = constant_truth(0.0);
        calibrate_intercept(&mut truth, &apps, &prices, 0.21, 3).unwrap();
        let ds = sample_accepts_and_build_dataset(&apps, &prices, &truth, &RewardParams::default(), 3).unwrap();
        assert!((ds.accept_rate() - 0.21).abs() < 0.002);
    }
}
