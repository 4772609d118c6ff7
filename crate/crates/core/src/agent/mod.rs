//! Conservative Q-learning on a soft actor-critic base.

pub mod actor;
pub mod critic;
pub mod policy;
pub mod train;

pub use actor::{actor_sample, scale_action, unscale_action, Actor, ActorSample};
pub use critic::{cql_penalty, cql_penalty_terms, critic_target, importance_logsumexp, CriticPair, PenaltyTerms};
pub use policy::CqlPolicy;
pub use train::{alpha_update, train, write_metrics_csv, Agent, Batch, StepMetrics, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CqlConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Uniform and policy samples per state in the penalty estimator.
    pub n_action_samples: usize,
    /// κ, applied to each critic's penalty.
    pub alpha_threshold: f64,
    pub conservative_weight: f64,
    pub initial_alpha: f64,
    pub initial_temperature: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temp_lr: f64,
    pub alpha_lr: f64,
    /// Dropout on the hidden layers of the online critics.
    pub dropout: f64,
    pub weight_decay: f64,
    pub n_critics: usize,
    pub polyak_tau: f64,
    pub target_entropy: f64,
    /// Pins α (ablation mode) and disables its update.
    pub fixed_alpha: Option<f64>,
    pub seed: u64,
}

impl Default for CqlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.999,
            batch_size: 256,
            n_epochs: 20,
            hidden: vec![64, 64, 64, 64],
            activation: Activation::Relu,
            n_action_samples: 10,
            alpha_threshold: 10.0,
            conservative_weight: 5.0,
            initial_alpha: 1.0,
            initial_temperature: 1.0,
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            temp_lr: 1e-4,
            alpha_lr: 1e-4,
            dropout: 0.2,
            weight_decay: 1e-4,
            n_critics: 2,
            polyak_tau: 0.005,
            target_entropy: -1.0,
            fixed_alpha: None,
            seed: 333,
        }
    }
}

impl CqlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if self.n_action_samples < 1 || self.batch_size < 1 {
            return bad("n_action_samples and batch_size must be >= 1".into());
        }
        if [self.actor_lr, self.critic_lr, self.temp_lr, self.alpha_lr]
            .iter()
            .any(|lr| !(*lr > 0.0 && lr.is_finite()))
        {
            return bad("learning rates must be > 0".into());
        }
        if self.n_critics != 2 {
            return bad(format!("n_critics must be 2, got {}", self.n_critics));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.polyak_tau > 0.0 && self.polyak_tau <= 1.0) {
            return bad(format!("polyak_tau {} outside (0, 1]", self.polyak_tau));
        }
        if !(self.initial_alpha > 0.0 && self.initial_temperature > 0.0) {
            return bad("initial alpha and temperature must be > 0".into());
        }
        if let Some(a) = self.fixed_alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return bad(format!("fixed_alpha {a} must be >= 0"));
            }
        }
        if self.hidden.iter().any(|h| *h == 0) {
            return bad("hidden layer widths must be >= 1".into());
        }
        Ok(())
    }
}
