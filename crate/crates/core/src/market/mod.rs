//! Synthetic loan-application markets with known demand.

pub mod application;
pub mod behavioral;
pub mod config;
pub mod dataset;
pub mod demand;
pub mod features;
pub mod generator;
pub mod transitions;

pub use application::{CarType, LoanApplication, LoanType, PartnerBin, StateCode, Tier, MIN_AMOUNT};
pub use behavioral::{behavioral_price, behavioral_prices, BehavioralRule};
pub use config::{DemandFamily, MarketConfig};
pub use dataset::{
    calibrate_intercept, sample_accepts_and_build_dataset, Dataset, DatasetRow, Split, DEFAULT_SPLIT,
};
pub use demand::{default_truth, true_accept_probability, LinearDemand, TruthModel, TruthParams};
pub use features::{state_dim, state_feature_names, state_features, FeatureSpec, ResponseTerm};
pub use generator::{generate_applications, pd_from_fico};
pub use transitions::{to_transitions, StateEncoder};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::reward::RewardParams;

/// Independent random substreams derived from one market seed.
pub(crate) mod streams {
    pub const APPLICATIONS: u64 = 1;
    pub const BEHAVIORAL: u64 = 2;
    pub const ACCEPTS: u64 = 3;
    pub const TRUTH: u64 = 4;
}

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A generated market: the calibrated truth plus the logged dataset.
#[derive(Debug, Clone)]
pub struct Market {
    pub config: MarketConfig,
    pub truth: TruthModel,
    pub dataset: Dataset,
}

/// Runs the whole generator: applications, behavioral prices, truth,
/// intercept calibration, accept sampling and the default split.
pub fn build_market(config: &MarketConfig, reward: &RewardParams) -> Result<Market> {
    config.validate()?;
    reward.validate()?;
    let apps = generate_applications(config)?;
    let prices = behavioral_prices(&apps, &BehavioralRule::default(), config.behavioral_noise_sd, config.seed);
    let mut truth_rng = substream(config.seed, streams::TRUTH);
    let params = default_truth(
        config.demand_family,
        config.n_segments,
        config.drift_magnitude,
        config.n_applications,
        &mut truth_rng,
    )?;
    let mut truth = TruthModel::new(params);
    calibrate_intercept(&mut truth, &apps, &prices, config.target_accept_rate, config.seed)?;
    let mut dataset = sample_accepts_and_build_dataset(&apps, &prices, &truth, reward, config.seed)?;
    dataset.split(DEFAULT_SPLIT)?;
    Ok(Market {
        config: config.clone(),
        truth,
        dataset,
    })
}
