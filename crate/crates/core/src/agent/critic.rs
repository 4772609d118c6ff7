//! Twin critics, TD targets and the conservative penalty.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::actor::Actor;
use crate::error::{Error, Result};
use crate::nn::{Matrix, Network};
use crate::scalar::Scalar;

/// Floor applied to policy densities inside the penalty estimator.
pub const MIN_POLICY_DENSITY: f64 = 1e-10;
/// Density of the uniform proposal over the scaled interval [−1, 1].
pub const UNIFORM_DENSITY: f64 = 0.5;

/// `[state | scaled action]` rows.
pub fn critic_input<T: Scalar>(states: &Matrix<T>, scaled_actions: &[f64]) -> Result<Matrix<T>> {
    let a = Matrix::from_vec(
        scaled_actions.len(),
        1,
        scaled_actions.iter().map(|&v| T::of(v)).collect(),
    )?;
    states.hstack(&a)
}

/// Like [`critic_input`] but with `per_state` consecutive actions per state.
pub fn critic_input_repeated<T: Scalar>(states: &Matrix<T>, scaled_actions: &[f64], per_state: usize) -> Result<Matrix<T>> {
    if scaled_actions.len() != states.rows() * per_state {
        return Err(Error::DimensionMismatch {
            context: "repeated critic actions",
            expected: states.rows() * per_state,
            got: scaled_actions.len(),
        });
    }
    let d = states.cols();
    let mut data = Vec::with_capacity(scaled_actions.len() * (d + 1));
    for (k, &a) in scaled_actions.iter().enumerate() {
        data.extend_from_slice(states.row(k / per_state));
        data.push(T::of(a));
    }
    Matrix::from_vec(scaled_actions.len(), d + 1, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticPair<T> {
    pub online: [Network<T>; 2],
    pub target: [Network<T>; 2],
}

impl<T: Scalar> CriticPair<T> {
    /// Targets start as exact copies of the online critics.
    pub fn new(q1: Network<T>, q2: Network<T>) -> Result<Self> {
        for q in [&q1, &q2] {
            if q.output_dim() != 1 {
                return Err(Error::DimensionMismatch {
                    context: "critic output",
                    expected: 1,
                    got: q.output_dim(),
                });
            }
        }
        if q1.input_dim() != q2.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "critic inputs",
                expected: q1.input_dim(),
                got: q2.input_dim(),
            });
        }
        Ok(Self {
            target: [q1.clone(), q2.clone()],
            online: [q1, q2],
        })
    }

    /// Inference-mode values of one online critic.
    pub fn q(&self, i: usize, input: &Matrix<T>) -> Result<Vec<f64>> {
        values(&self.online[i], input)
    }

    /// Elementwise minimum of the two target critics.
    pub fn target_min(&self, input: &Matrix<T>) -> Result<Vec<f64>> {
        let a = values(&self.target[0], input)?;
        let b = values(&self.target[1], input)?;
        Ok(a.into_iter().zip(b).map(|(x, y)| x.min(y)).collect())
    }

    /// Polyak averaging of both targets towards the online critics.
    pub fn sync_targets(&mut self, tau: f64) -> Result<()> {
        for i in 0..2 {
            self.target[i].soft_update_from(&self.online[i], T::of(tau))?;
        }
        Ok(())
    }
}

pub(crate) fn values<T: Scalar>(net: &Network<T>, input: &Matrix<T>) -> Result<Vec<f64>> {
    let out = net.predict(input)?;
    if !out.is_finite() {
        return Err(Error::NonFinite("critic output".into()));
    }
    Ok(out.as_slice().iter().map(|v| v.to_f64_lossy()).collect())
}

/// `y = r + γ·(min Q̄(s′, a′) − temp·log π(a′|s′))` with `a′ ~ π(s′)`;
/// rows flagged `exclude_bootstrap` get `y = r`.
#[allow(clippy::too_many_arguments)]
pub fn critic_target<T: Scalar, R: Rng + ?Sized>(
    rewards: &[f64],
    next_states: &Matrix<T>,
    exclude_bootstrap: &[bool],
    actor: &Actor<T>,
    critics: &CriticPair<T>,
    temperature: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if next_states.rows() != n || exclude_bootstrap.len() != n {
        return Err(Error::DimensionMismatch {
            context: "critic target batch",
            expected: n,
            got: next_states.rows(),
        });
    }
    if gamma == 0.0 {
        return Ok(rewards.to_vec());
    }
    let samples = actor.sample(next_states, 1, rng)?;
    let actions: Vec<f64> = samples.iter().map(|s| s.scaled_action).collect();
    let q = critics.target_min(&critic_input(next_states, &actions)?)?;
    Ok((0..n)
        .map(|i| {
            if exclude_bootstrap[i] {
                rewards[i]
            } else {
                rewards[i] + gamma * (q[i] - temperature * samples[i].log_prob)
            }
        })
        .collect())
}

/// `log((1/M)·Σ exp(qₖ − log densityₖ))` over `M` proposal samples, with
/// max-subtraction.
pub fn importance_logsumexp(q: &[f64], log_density: &[f64]) -> f64 {
    let m = q.len() as f64;
    let t: Vec<f64> = q.iter().zip(log_density).map(|(q, d)| q - d).collect();
    let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + (t.iter().map(|v| (v - max).exp()).sum::<f64>() / m).ln()
}

/// Conservative penalty of one critic on a batch, and the pieces needed to
/// differentiate it.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTerms {
    /// Batch mean of `logsumexp − Q(s, a_data)`.
    pub value: f64,
    /// Per-state log-sum-exp estimate.
    pub logsumexp: Vec<f64>,
    /// `∂ logsumexpⱼ / ∂ Q` at each uniform sample, row-major B×N.
    pub uniform_weights: Vec<f64>,
    /// Same for the policy samples.
    pub policy_weights: Vec<f64>,
    /// Policy densities raised to [`MIN_POLICY_DENSITY`].
    pub clamped_densities: usize,
}

/// The importance-sampled estimator
/// `log[(1/2N)·Σ_unif exp Q / ½ + (1/2N)·Σ_π exp Q / π] − mean Q(s, a_data)`.
///
/// `q_uniform`, `q_policy` and `policy_log_density` are row-major B×N.
pub fn cql_penalty_terms(
    q_data: &[f64],
    q_uniform: &[f64],
    q_policy: &[f64],
    policy_log_density: &[f64],
    n: usize,
) -> Result<PenaltyTerms> {
    let b = q_data.len();
    if n == 0 {
        return Err(Error::InvalidConfig("penalty needs at least one action sample".into()));
    }
    for (len, ctx) in [
        (q_uniform.len(), "uniform samples"),
        (q_policy.len(), "policy samples"),
        (policy_log_density.len(), "policy densities"),
    ] {
        if len != b * n {
            return Err(Error::DimensionMismatch {
                context: ctx,
                expected: b * n,
                got: len,
            });
        }
    }
    let log_floor = MIN_POLICY_DENSITY.ln();
    let log_unif = UNIFORM_DENSITY.ln();
    let mut clamped = 0;
    let mut lse = Vec::with_capacity(b);
    let mut wu = vec![0.0; b * n];
    let mut wp = vec![0.0; b * n];
    let mut total = 0.0;
    for j in 0..b {
        let mut t = Vec::with_capacity(2 * n);
        for k in 0..n {
            t.push(q_uniform[j * n + k] - log_unif);
        }
        for k in 0..n {
            let mut d = policy_log_density[j * n + k];
            if !(d >= log_floor) {
                clamped += 1;
                d = log_floor;
            }
            t.push(q_policy[j * n + k] - d);
        }
        let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = t.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        let l = max + (s / (2 * n) as f64).ln();
        for k in 0..n {
            wu[j * n + k] = e[k] / s;
            wp[j * n + k] = e[n + k] / s;
        }
        total += l - q_data[j];
        lse.push(l);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("conservative penalty".into()));
    }
    if clamped > 0 {
        log::debug!("{clamped} policy densities clamped to {MIN_POLICY_DENSITY}");
    }
    Ok(PenaltyTerms {
        value: total / b.max(1) as f64,
        logsumexp: lse,
        uniform_weights: wu,
        policy_weights: wp,
        clamped_densities: clamped,
    })
}

/// Penalty of online critic `i` with fresh uniform and policy samples.
pub fn cql_penalty<T: Scalar, R: Rng + ?Sized>(
    critics: &CriticPair<T>,
    i: usize,
    states: &Matrix<T>,
    scaled_actions: &[f64],
    actor: &Actor<T>,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let b = states.rows();
    let unif: Vec<f64> = (0..b * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pol = actor.sample(states, n, rng)?;
    let pol_a: Vec<f64> = pol.iter().map(|s| s.scaled_action).collect();
    let pol_d: Vec<f64> = pol.iter().map(|s| s.log_prob).collect();
    let q_data = critics.q(i, &critic_input(states, scaled_actions)?)?;
    let q_u = critics.q(i, &critic_input_repeated(states, &unif, n)?)?;
    let q_p = critics.q(i, &critic_input_repeated(states, &pol_a, n)?)?;
    Ok(cql_penalty_terms(&q_data, &q_u, &q_p, &pol_d, n)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_densities_and_zero_q_give_zero() {
        // N = 1, uniform density forced to 1 by folding log ½ into Q.
        let t = cql_penalty_terms(&[0.0], &[UNIFORM_DENSITY.ln()], &[0.0], &[0.0], 1).unwrap();
        assert!(t.value.abs() < 1e-15);
    }

    #[test]
    fn shift_moves_logsumexp_not_penalty() {
        let qd = [0.3, -0.2];
        let qu = [0.1, 0.5, -0.4, 0.9, 0.0, 0.2];
        let qp = [0.7, 0.2, 0.1, -0.3, 0.4, 0.8];
        let lp = [0.5, -1.0, 0.2, 0.1, -0.3, 1.1];
        let base = cql_penalty_terms(&qd, &qu, &qp, &lp, 3).unwrap();
        let c = 123.456;
        let sh = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let moved = cql_penalty_terms(&sh(&qd), &sh(&qu), &sh(&qp), &lp, 3).unwrap();
        for (a, b) in base.logsumexp.iter().zip(&moved.logsumexp) {
            assert!((b - a - c).abs() < 1e-9);
        }
        assert!((base.value - moved.value).abs() < 1e-9);
    }

    #[test]
    fn weights_are_the_logsumexp_gradient() {
        let qd = [0.0];
        let qu = [0.1, 0.5];
        let qp = [0.7, 0.2];
        let lp = [0.5, -1.0];
        let t = cql_penalty_terms(&qd, &qu, &qp, &lp, 2).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut up = qu;
            up[k] += h;
            let mut dn = qu;
            dn[k] -= h;
            let fd = (cql_penalty_terms(&qd, &up, &qp, &lp, 2).unwrap().value
                - cql_penalty_terms(&qd, &dn, &qp, &lp, 2).unwrap().value)
                / (2.0 * h);
            assert!((fd - t.uniform_weights[k]).abs() < 1e-8);
        }
        let sum: f64 = t.uniform_weights.iter().chain(&t.policy_weights).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_densities_are_floored() {
        let t = cql_penalty_terms(&[0.0], &[0.0], &[0.0], &[-1e9], 1).unwrap();
        assert_eq!(t.clamped_densities, 1);
        assert!(t.value.is_finite());
    }
}
