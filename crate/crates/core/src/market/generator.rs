//! Application stream generator.
//!
//! Applications arrive uniformly over 26 months. Each applicant draws a
//! latent segment first; the segment shifts the FICO mean, the car-type and
//! partner mix and the loan size, so segments are partly (not fully)
//! recoverable from observables.
//!
//! PD is `σ(−1.0986 − 0.0099857·(fico − 500))`: 25% at FICO 500, 1% at 850.

use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::Rng;
use rand_distr::{Geometric, Normal};

use super::application::{CarType, LoanApplication, LoanType, PartnerBin, StateCode, Tier, MIN_AMOUNT};
use super::config::MarketConfig;
use super::demand::sigmoid;
use super::{streams, substream};
use crate::error::Result;

pub const N_MONTHS: u32 = 26;
const PRIME_START: f64 = 4.75;
const PRIME_STEP_SD: f64 = 0.15;
const PRIME_RANGE: (f64, f64) = (3.0, 6.5);
const REFINANCE_SHARE: f64 = 0.2;
const TERMS: [u32; 5] = [24, 36, 48, 60, 72];
const TERM_WEIGHTS: [f64; 5] = [0.05, 0.2, 0.25, 0.35, 0.15];
const STATE_WEIGHTS: [f64; 5] = [0.4, 0.15, 0.15, 0.1, 0.2];
/// Extra competitor margin per tier, APR points.
const TIER_COMPETITION_LOADING: [f64; 4] = [0.0, 0.4, 1.0, 2.2];

pub fn pd_from_fico(fico: u32) -> f64 {
    sigmoid(-1.0986 - 0.009_985_7 * (f64::from(fico) - 500.0))
}

fn tier_from_score(score: f64) -> Tier {
    if score >= 740.0 {
        Tier::T1
    } else if score >= 690.0 {
        Tier::T2
    } else if score >= 640.0 {
        Tier::T3
    } else {
        Tier::T7
    }
}

/// Position of segment `k` on the [0, 1] profile axis.
pub(crate) fn segment_position(k: u32, n_segments: usize) -> f64 {
    if n_segments <= 1 {
        0.5
    } else {
        f64::from(k) / (n_segments - 1) as f64
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite normal parameters")
}

/// Generates `config.n_applications` applications in chronological order.
pub fn generate_applications(config: &MarketConfig) -> Result<Vec<LoanApplication>> {
    config.validate()?;
    let mut rng = substream(config.seed, streams::APPLICATIONS);
    let n = config.n_applications;

    let mut prime_by_month = Vec::with_capacity(N_MONTHS as usize);
    let mut prime = PRIME_START;
    let step = normal(0.0, PRIME_STEP_SD);
    for _ in 0..N_MONTHS {
        prime_by_month.push(prime);
        prime = (prime + step.sample(&mut rng)).clamp(PRIME_RANGE.0, PRIME_RANGE.1);
    }

    let terms = WeightedIndex::new(TERM_WEIGHTS).expect("weights");
    let states = WeightedIndex::new(STATE_WEIGHTS).expect("weights");
    let days = Geometric::new(0.45).expect("p in (0, 1]");
    let competition_noise = normal(0.0, 0.6);
    let tier_noise = normal(0.0, 20.0);

    let mut apps = Vec::with_capacity(n);
    for i in 0..n {
        let month = ((i as u64 * u64::from(N_MONTHS)) / n as u64) as u32;
        let prime_rate = prime_by_month[month as usize];
        let segment = rng.random_range(0..config.n_segments as u32);
        let t = segment_position(segment, config.n_segments);

        let fico = normal(760.0 - 110.0 * t, 45.0).sample(&mut rng).round().clamp(500.0, 850.0) as u32;
        let pd = pd_from_fico(fico);
        let tier = tier_from_score(f64::from(fico) + tier_noise.sample(&mut rng));

        let refinance = rng.random::<f64>() < REFINANCE_SHARE;
        let (loan_type, car_type, previous_rate) = if refinance {
            let prev = prime_rate + rng.random_range(2.5..6.5);
            (LoanType::Refinance, CarType::R, prev)
        } else {
            let used = rng.random::<f64>() < 0.2 + 0.5 * t;
            (LoanType::Finance, if used { CarType::U } else { CarType::N }, 0.0)
        };

        let partner = WeightedIndex::new([0.6 - 0.4 * t, 0.1 + 0.4 * t, 0.3]).expect("weights");
        let partner_bin = PartnerBin::ALL[partner.sample(&mut rng)];

        let log_amount = normal(52_000f64.ln() - 0.35 * t, 0.45);
        let amount = loop {
            let a = log_amount.sample(&mut rng).exp().round();
            if a >= MIN_AMOUNT {
                break a;
            }
        };
        let term = TERMS[terms.sample(&mut rng)];
        let competition_rate = (prime_rate
            + 1.2
            + TIER_COMPETITION_LOADING[tier.index()]
            + competition_noise.sample(&mut rng))
        .max(0.0);

        apps.push(LoanApplication {
            app_index: i as u64,
            term,
            amount,
            fico,
            pd,
            previous_rate,
            competition_rate,
            prime_rate,
            tier,
            loan_type,
            car_type,
            partner_bin,
            state_code: StateCode::ALL[states.sample(&mut rng)],
            months_since_start: month,
            day_of_week: rng.random_range(0..7),
            month_of_year: ((6 + month) % 12 + 1) as u8,
            days_since_app: days.sample(&mut rng).min(30) as u32,
            latent_segment: segment,
        });
    }
    Ok(apps)
}
