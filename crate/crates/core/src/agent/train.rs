//! Agent state and the training loop.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actor::{unscale_action, Actor};
use super::critic::{cql_penalty_terms, critic_input, critic_input_repeated, critic_target, values, CriticPair};
use super::CqlConfig;
use crate::agent::actor::scale_action;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Matrix, MinMaxScaler, Network, NetworkCheckpoint, ScalarAdam};
use crate::reward::Transition;
use crate::scalar::Scalar;

const LOG_ALPHA_RANGE: (f64, f64) = (-30.0, 15.0);

/// Lagrangian dual step: ascent on `α·(penalty − κ)` in log-α, so α grows
/// while the penalty exceeds κ and shrinks otherwise.
pub fn alpha_update(log_alpha: f64, penalty: f64, threshold: f64, alpha_lr: f64) -> f64 {
    let grad = log_alpha.exp() * (penalty - threshold);
    (log_alpha + alpha_lr * grad).clamp(LOG_ALPHA_RANGE.0, LOG_ALPHA_RANGE.1)
}

/// A minibatch in network units: scaled states, scaled actions, scaled
/// rewards.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub states: Matrix<T>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Matrix<T>,
    pub exclude_bootstrap: Vec<bool>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_transitions(transitions: &[Transition], idx: &[usize], reward_scaler: &MinMaxScaler<f64>) -> Result<Self> {
        let d = transitions.first().map_or(0, |t| t.state.len());
        let mut s = Vec::with_capacity(idx.len() * d);
        let mut ns = Vec::with_capacity(idx.len() * d);
        let mut actions = Vec::with_capacity(idx.len());
        let mut rewards = Vec::with_capacity(idx.len());
        let mut excl = Vec::with_capacity(idx.len());
        for &i in idx {
            let t = &transitions[i];
            s.extend(t.state.iter().map(|&v| T::of(v)));
            ns.extend(t.next_state.iter().map(|&v| T::of(v)));
            actions.push(scale_action(t.action));
            rewards.push(reward_scaler.transform(&[t.reward])?[0]);
            excl.push(t.exclude_bootstrap);
        }
        Ok(Self {
            states: Matrix::from_vec(idx.len(), d, s)?,
            actions,
            rewards,
            next_states: Matrix::from_vec(idx.len(), d, ns)?,
            exclude_bootstrap: excl,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub critic_loss: f64,
    /// Mean Bellman error of the two critics, without the penalty.
    pub critic_mse: f64,
    pub actor_loss: f64,
    pub penalty: f64,
    pub alpha: f64,
    pub temperature: f64,
    /// Mean |sampled APR − logged APR|.
    pub mean_action_gap: f64,
}

#[derive(Debug, Clone)]
pub struct Agent<T> {
    pub config: CqlConfig,
    pub actor: Actor<T>,
    pub critics: CriticPair<T>,
    pub log_temperature: f64,
    pub log_alpha: f64,
    pub reward_scaler: MinMaxScaler<f64>,
    actor_opt: AdamState<T>,
    critic_opt: [AdamState<T>; 2],
    temp_opt: ScalarAdam,
    rng: ChaCha8Rng,
    steps: u64,
}

fn stack_rows<T: Scalar>(parts: &[Matrix<T>]) -> Result<Matrix<T>> {
    let cols = parts[0].cols();
    let rows = parts.iter().map(|m| m.rows()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for m in parts {
        data.extend_from_slice(m.as_slice());
    }
    Matrix::from_vec(rows, cols, data)
}

impl<T: Scalar> Agent<T> {
    pub fn new(state_dim: usize, config: CqlConfig, reward_scaler: MinMaxScaler<f64>) -> Result<Self> {
        config.validate()?;
        if !reward_scaler.is_fitted() {
            return Err(Error::ScalerNotFitted);
        }
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let actor = Actor::new(Network::mlp(state_dim, &config.hidden, 2, config.activation, 0.0, &mut init)?)?;
        let mk = |rng: &mut ChaCha8Rng| Network::mlp(state_dim + 1, &config.hidden, 1, config.activation, config.dropout, rng);
        let critics = CriticPair::new(mk(&mut init)?, mk(&mut init)?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            actor_opt: AdamState::new(&actor.network, config.actor_lr, config.weight_decay),
            critic_opt: [
                AdamState::new(&critics.online[0], config.critic_lr, config.weight_decay),
                AdamState::new(&critics.online[1], config.critic_lr, config.weight_decay),
            ],
            temp_opt: ScalarAdam::new(config.temp_lr),
            log_temperature: config.initial_temperature.ln(),
            log_alpha: config.initial_alpha.ln(),
            actor,
            critics,
            reward_scaler,
            rng,
            steps: 0,
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.config.fixed_alpha.unwrap_or_else(|| self.log_alpha.exp())
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update: critics, actor, temperature, α, then target sync.
    pub fn train_step(&mut self, batch: &Batch<T>) -> Result<StepMetrics> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Data("empty minibatch".into()));
        }
        let cfg = &self.config;
        let n = cfg.n_action_samples;
        let temp = self.temperature();
        let alpha = self.alpha();
        let bf = b as f64;

        // (1) critics
        let y = critic_target(
            &batch.rewards,
            &batch.next_states,
            &batch.exclude_bootstrap,
            &self.actor,
            &self.critics,
            temp,
            cfg.gamma,
            &mut self.rng,
        )?;
        let unif: Vec<f64> = (0..b * n).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        let pol = self.actor.sample(&batch.states, n, &mut self.rng)?;
        let pol_a: Vec<f64> = pol.iter().map(|s| s.scaled_action).collect();
        let pol_lp: Vec<f64> = pol.iter().map(|s| s.log_prob).collect();
        let input = stack_rows(&[
            critic_input(&batch.states, &batch.actions)?,
            critic_input_repeated(&batch.states, &unif, n)?,
            critic_input_repeated(&batch.states, &pol_a, n)?,
        ])?;
        let cw = cfg.conservative_weight * alpha;
        let mut critic_loss = 0.0;
        let mut critic_mse = 0.0;
        let mut penalties = [0.0; 2];
        for i in 0..2 {
            let (out, cache) = self.critics.online[i].forward_cached(&input, &mut self.rng)?;
            if !out.is_finite() {
                return Err(Error::NonFinite(format!("critic {i} output at step {}", self.steps)));
            }
            let q: Vec<f64> = out.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
            let (q_data, rest) = q.split_at(b);
            let (q_u, q_p) = rest.split_at(b * n);
            let terms = cql_penalty_terms(q_data, q_u, q_p, &pol_lp, n)?;
            let mse = q_data.iter().zip(&y).map(|(q, y)| (q - y) * (q - y)).sum::<f64>() / bf;
            let loss = mse + cw * (terms.value - cfg.alpha_threshold);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "critic {i} loss at step {} (mse {mse}, penalty {})",
                    self.steps, terms.value
                )));
            }
            critic_loss += loss / 2.0;
            critic_mse += mse / 2.0;
            penalties[i] = terms.value;
            let mut g = Vec::with_capacity(q.len());
            g.extend(q_data.iter().zip(&y).map(|(q, y)| T::of((2.0 * (q - y) - cw) / bf)));
            g.extend(terms.uniform_weights.iter().map(|w| T::of(cw * w / bf)));
            g.extend(terms.policy_weights.iter().map(|w| T::of(cw * w / bf)));
            let (grads, _) = self.critics.online[i].backward(&cache, &Matrix::from_vec(q.len(), 1, g)?)?;
            self.critic_opt[i].step(&mut self.critics.online[i], &grads)?;
        }

        // (2) actor, against the updated critics in inference mode
        let (out, cache) = self.actor.network.forward_cached(&batch.states, &mut self.rng)?;
        let heads = Actor::<T>::heads(&out)?;
        let samples = Actor::<T>::sample_from_heads(&heads, 1, &mut self.rng);
        let acts: Vec<f64> = samples.iter().map(|s| s.scaled_action).collect();
        let qin = critic_input(&batch.states, &acts)?;
        let mut qs = Vec::with_capacity(2);
        let mut caches = Vec::with_capacity(2);
        for i in 0..2 {
            let (o, c) = self.critics.online[i].forward_cached_with(&qin, false, &mut self.rng)?;
            qs.push(o.as_slice().iter().map(|v| v.to_f64_lossy()).collect::<Vec<f64>>());
            caches.push(c);
        }
        let pick: Vec<usize> = (0..b).map(|r| usize::from(qs[1][r] < qs[0][r])).collect();
        let mut dq_da = vec![0.0; b];
        for i in 0..2 {
            let sel: Vec<T> = pick.iter().map(|&p| if p == i { T::one() } else { T::zero() }).collect();
            if sel.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let (_, gin) = self.critics.online[i].backward(&caches[i], &Matrix::from_vec(b, 1, sel)?)?;
            let last = gin.cols() - 1;
            for r in 0..b {
                if pick[r] == i {
                    dq_da[r] = gin.get(r, last).to_f64_lossy();
                }
            }
        }
        let mut actor_loss = 0.0;
        let mut ga = Vec::with_capacity(2 * b);
        for r in 0..b {
            let s = &samples[r];
            let qmin = qs[0][r].min(qs[1][r]);
            actor_loss += (temp * s.log_prob - qmin) / bf;
            let a = s.scaled_action;
            let dq_du = dq_da[r] * (1.0 - a * a);
            let sigma_eps = s.log_std.exp() * s.noise;
            let d_mean = -dq_du + temp * 2.0 * a;
            let d_log_std = if s.clamped {
                0.0
            } else {
                -dq_du * sigma_eps + temp * (-1.0 + 2.0 * a * sigma_eps)
            };
            ga.push(T::of(d_mean / bf));
            ga.push(T::of(d_log_std / bf));
        }
        if !actor_loss.is_finite() {
            return Err(Error::NonFinite(format!("actor loss at step {}", self.steps)));
        }
        let (agrads, _) = self.actor.network.backward(&cache, &Matrix::from_vec(b, 2, ga)?)?;
        self.actor_opt.step(&mut self.actor.network, &agrads)?;

        // (3) temperature
        let mean_lp = samples.iter().map(|s| s.log_prob).sum::<f64>() / bf;
        let temp_grad = -temp * (mean_lp + cfg.target_entropy);
        self.log_temperature = self.temp_opt.step(self.log_temperature, temp_grad);

        // (4) α
        let penalty = 0.5 * (penalties[0] + penalties[1]);
        if cfg.fixed_alpha.is_none() {
            self.log_alpha = alpha_update(self.log_alpha, penalty, cfg.alpha_threshold, cfg.alpha_lr);
        }

        // (5) targets
        self.critics.sync_targets(cfg.polyak_tau)?;
        self.steps += 1;

        let gap = samples
            .iter()
            .zip(&batch.actions)
            .map(|(s, a)| (unscale_action(s.scaled_action) - unscale_action(*a)).abs())
            .sum::<f64>()
            / bf;
        Ok(StepMetrics {
            step: self.steps,
            critic_loss,
            critic_mse,
            actor_loss,
            penalty,
            alpha: self.alpha(),
            temperature: self.temperature(),
            mean_action_gap: gap,
        })
    }

    /// `max over critics of E[Q(s, a~π)] − E[Q(s, a_data)]` on the given
    /// transitions, in scaled-reward units.
    pub fn conservative_gap(&self, transitions: &[Transition]) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(2);
        let mut sums = [0.0; 2];
        let idx: Vec<usize> = (0..transitions.len()).collect();
        for chunk in idx.chunks(1024) {
            let batch = Batch::<T>::from_transitions(transitions, chunk, &self.reward_scaler)?;
            let pol: Vec<f64> = self
                .actor
                .sample(&batch.states, 1, &mut rng)?
                .iter()
                .map(|s| s.scaled_action)
                .collect();
            let pin = critic_input(&batch.states, &pol)?;
            let din = critic_input(&batch.states, &batch.actions)?;
            for (i, sum) in sums.iter_mut().enumerate() {
                let qp = values(&self.critics.online[i], &pin)?;
                let qd = values(&self.critics.online[i], &din)?;
                *sum += qp.iter().zip(&qd).map(|(p, d)| p - d).sum::<f64>();
            }
        }
        let n = transitions.len().max(1) as f64;
        Ok((sums[0] / n).max(sums[1] / n))
    }

    /// Writes actor and critic checkpoints for `epoch` into `dir`.
    pub fn save_epoch(&self, dir: &Path, epoch: usize) -> Result<()> {
        NetworkCheckpoint::new(self.actor.network.clone(), Some(self.actor_opt.clone()))
            .save(&dir.join(format!("epoch_{epoch:03}_actor.json")))?;
        for i in 0..2 {
            NetworkCheckpoint::new(self.critics.online[i].clone(), Some(self.critic_opt[i].clone()))
                .save(&dir.join(format!("epoch_{epoch:03}_critic{}.json", i + 1)))?;
        }
        Ok(())
    }
}

/// Metrics and final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub agent: Agent<T>,
    pub metrics: Vec<StepMetrics>,
}

/// `n_epochs` passes over shuffled minibatches. `on_epoch` runs after every
/// epoch (1-based) and may write checkpoints or evaluate.
pub fn train<T: Scalar>(
    transitions: &[Transition],
    config: &CqlConfig,
    mut on_epoch: impl FnMut(usize, &Agent<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let first = transitions.first().ok_or(Error::EmptySplit("train"))?;
    let rewards: Vec<[f64; 1]> = transitions.iter().map(|t| [t.reward]).collect();
    let mut scaler = MinMaxScaler::new(0.0, 1.0);
    scaler.fit(&rewards)?;
    let mut agent = Agent::new(first.state.len(), config.clone(), scaler)?;
    let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle.set_stream(3);
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    let mut metrics = Vec::new();
    for epoch in 1..=config.n_epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::from_transitions(transitions, chunk, &agent.reward_scaler)?;
            metrics.push(agent.train_step(&batch)?);
        }
        if let Some(m) = metrics.last() {
            log::info!(
                "epoch {epoch}: critic {:.4} actor {:.4} penalty {:.4} alpha {:.4} temp {:.4}",
                m.critic_loss,
                m.actor_loss,
                m.penalty,
                m.alpha,
                m.temperature
            );
        }
        on_epoch(epoch, &agent)?;
    }
    Ok(TrainOutcome { agent, metrics })
}

/// Metric trace with columns step, critic_loss, critic_mse, actor_loss, penalty, alpha,
/// temperature, mean_action_gap.
pub fn write_metrics_csv<W: Write>(metrics: &[StepMetrics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush().map_err(|e| Error::Data(format!("csv flush: {e}")))?;
    Ok(())
}
