//! The historical (behavioral) pricing rule.

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::application::LoanApplication;
use super::{streams, substream};
use crate::reward::{MAX_RATE, MIN_RATE};

/// `prime + base_margin + tier_loading[tier] + pd_loading·pd + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehavioralRule {
    pub base_margin: f64,
    /// Indexed by [`Tier::index`](super::Tier::index).
    pub tier_loading: [f64; 4],
    pub pd_loading: f64,
}

impl Default for BehavioralRule {
    fn default() -> Self {
        Self {
            base_margin: 1.6,
            tier_loading: [0.0, 0.5, 1.1, 2.2],
            pd_loading: 8.0,
        }
    }
}

impl BehavioralRule {
    pub fn mean_price(&self, app: &LoanApplication) -> f64 {
        app.prime_rate + self.base_margin + self.tier_loading[app.tier.index()] + self.pd_loading * app.pd
    }
}

/// One behavioral quote, clamped to the quotable range.
pub fn behavioral_price<R: Rng + ?Sized>(app: &LoanApplication, rule: &BehavioralRule, noise_sd: f64, rng: &mut R) -> f64 {
    let noise = if noise_sd > 0.0 {
        Normal::new(0.0, noise_sd).expect("finite sd").sample(rng)
    } else {
        0.0
    };
    (rule.mean_price(app) + noise).clamp(MIN_RATE, MAX_RATE)
}

/// Quotes for a whole stream, from the market's behavioral substream.
pub fn behavioral_prices(apps: &[LoanApplication], rule: &BehavioralRule, noise_sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, streams::BEHAVIORAL);
    apps.iter().map(|a| behavioral_price(a, rule, noise_sd, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::application::sample_application;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_rule_is_deterministic_and_monotone_in_pd() {
        let rule = BehavioralRule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = sample_application();
        let p1 = behavioral_price(&a, &rule, 0.0, &mut rng);
        assert_eq!(p1, behavioral_price(&a, &rule, 0.0, &mut rng));
        let mut riskier = a.clone();
        riskier.pd = 0.2;
        assert!(behavioral_price(&riskier, &rule, 0.0, &mut rng) >= p1);
    }

    #[test]
    fn prices_stay_in_bounds() {
        let rule = BehavioralRule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = sample_application();
        for prime in [0.0, 4.0, 12.0] {
            a.prime_rate = prime;
            for _ in 0..2000 {
                let p = behavioral_price(&a, &rule, 3.0, &mut rng);
                assert!((MIN_RATE..=MAX_RATE).contains(&p));
            }
        }
    }
}
