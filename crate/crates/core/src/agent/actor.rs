//! Squashed-Gaussian actor.
//!
//! The network maps a scaled state to `(μ, log σ)` of a Gaussian over the
//! pre-squash variable `u`. Actions live in two spaces: the scaled action
//! `tanh(u) ∈ (−1, 1)` used by the critics and every density, and the APR
//! `MID + HALF_WIDTH·tanh(u) ∈ (2.5, 12.5)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Matrix, Network};
use crate::reward::{MAX_RATE, MIN_RATE};
use crate::scalar::Scalar;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const ACTION_MID: f64 = 0.5 * (MIN_RATE + MAX_RATE);
pub const ACTION_HALF_WIDTH: f64 = 0.5 * (MAX_RATE - MIN_RATE);

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn scale_action(apr: f64) -> f64 {
    (apr - ACTION_MID) / ACTION_HALF_WIDTH
}

pub fn unscale_action(scaled: f64) -> f64 {
    ACTION_MID + ACTION_HALF_WIDTH * scaled
}

/// `log(1 − tanh(u)²)`, stable for large |u|.
pub fn log_tanh_jacobian(u: f64) -> f64 {
    let softplus = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of the scaled action `tanh(u)` given the pre-squash sample.
pub fn squashed_log_prob(u: f64, mean: f64, log_std: f64) -> f64 {
    let z = (u - mean) / log_std.exp();
    -0.5 * z * z - log_std - HALF_LN_2PI - log_tanh_jacobian(u)
}

/// One reparameterized draw for a batch row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorSample {
    pub mean: f64,
    pub log_std: f64,
    /// Whether `log_std` hit a clamp bound (its gradient is then zero).
    pub clamped: bool,
    pub noise: f64,
    pub pre_squash: f64,
    /// `tanh(u)`.
    pub scaled_action: f64,
    /// Log-density in scaled-action space.
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor<T> {
    pub network: Network<T>,
}

impl<T: Scalar> Actor<T> {
    pub fn new(network: Network<T>) -> Result<Self> {
        if network.output_dim() != 2 {
            return Err(Error::DimensionMismatch {
                context: "actor output (mean, log std)",
                expected: 2,
                got: network.output_dim(),
            });
        }
        Ok(Self { network })
    }

    pub fn state_dim(&self) -> usize {
        self.network.input_dim()
    }

    /// Splits raw network output rows into clamped `(mean, log σ, clamped)`.
    pub fn heads(output: &Matrix<T>) -> Result<Vec<(f64, f64, bool)>> {
        if !output.is_finite() {
            return Err(Error::NonFinite("actor output".into()));
        }
        Ok((0..output.rows())
            .map(|i| {
                let mean = output.get(i, 0).to_f64_lossy();
                let raw = output.get(i, 1).to_f64_lossy();
                let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                (mean, log_std, raw != log_std)
            })
            .collect())
    }

    /// Draws `per_state` actions for each row of already computed heads.
    pub fn sample_from_heads<R: Rng + ?Sized>(
        heads: &[(f64, f64, bool)],
        per_state: usize,
        rng: &mut R,
    ) -> Vec<ActorSample> {
        let mut out = Vec::with_capacity(heads.len() * per_state);
        for &(mean, log_std, clamped) in heads {
            for _ in 0..per_state {
                let noise: f64 = StandardNormal.sample(rng);
                let u = mean + log_std.exp() * noise;
                let a = u.tanh();
                let log_prob = -0.5 * noise * noise - log_std - HALF_LN_2PI - log_tanh_jacobian(u);
                out.push(ActorSample {
                    mean,
                    log_std,
                    clamped,
                    noise,
                    pre_squash: u,
                    scaled_action: a,
                    log_prob,
                });
            }
        }
        out
    }

    /// Inference-mode samples, `per_state` per input row, grouped by row.
    pub fn sample<R: Rng + ?Sized>(&self, states: &Matrix<T>, per_state: usize, rng: &mut R) -> Result<Vec<ActorSample>> {
        let out = self.network.predict(states)?;
        Ok(Self::sample_from_heads(&Self::heads(&out)?, per_state, rng))
    }

    /// Deterministic scaled action `tanh(μ)` per row.
    pub fn deterministic(&self, states: &Matrix<T>) -> Result<Vec<f64>> {
        let out = self.network.predict(states)?;
        Ok(Self::heads(&out)?.into_iter().map(|(m, _, _)| m.tanh()).collect())
    }
}

/// Samples an APR for one state: returns `(apr, log density of the APR)`.
/// The density includes the tanh Jacobian and the affine scale.
pub fn actor_sample<T: Scalar, R: Rng + ?Sized>(actor: &Actor<T>, state: &[T], rng: &mut R) -> Result<(f64, f64)> {
    let x = Matrix::from_vec(1, state.len(), state.to_vec())?;
    let s = actor.sample(&x, 1, rng)?[0];
    let apr = unscale_action(s.scaled_action).clamp(MIN_RATE, MAX_RATE);
    Ok((apr, s.log_prob - ACTION_HALF_WIDTH.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Actor whose output ignores the state: constant `(mean, log_std)`.
    fn constant_actor(mean: f64, log_std: f64) -> Actor<f64> {
        let layer = DenseLayer {
            weights: Matrix::zeros(2, 1),
            biases: vec![mean, log_std],
            activation: Activation::Identity,
            dropout_rate: 0.0,
        };
        Actor::new(Network::new(vec![layer]).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_gaussian_gives_midpoint() {
        let actor = constant_actor(0.0, LOG_STD_MIN);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (apr, _) = actor_sample(&actor, &[0.3], &mut rng).unwrap();
        assert!((apr - 7.5).abs() < 1e-6);
    }

    #[test]
    fn samples_stay_inside_bounds() {
        let actor = constant_actor(1.5, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100_000 {
            let (apr, lp) = actor_sample(&actor, &[0.0], &mut rng).unwrap();
            assert!((MIN_RATE..=MAX_RATE).contains(&apr));
            assert!(lp.is_finite() || apr == MIN_RATE || apr == MAX_RATE);
        }
    }

    #[test]
    fn log_jacobian_matches_naive_formula() {
        for u in [-3.0, -0.4, 0.0, 0.9, 4.0] {
            let naive = (1.0 - f64::tanh(u).powi(2)).ln();
            assert!((log_tanh_jacobian(u) - naive).abs() < 1e-9);
        }
        assert!(log_tanh_jacobian(40.0).is_finite());
    }
}
