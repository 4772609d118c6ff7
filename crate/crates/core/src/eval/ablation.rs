//! Fixed-α ablation harness.

use serde::{Deserialize, Serialize};

use super::evaluate_prices;
use crate::agent::{train, CqlConfig, CqlPolicy};
use crate::error::Result;
use crate::market::{DatasetRow, StateEncoder};
use crate::response::PriceResponse;
use crate::reward::{RewardParams, Transition};

/// Test rows used by the ablation: the first 10,000 (or all, if fewer).
pub const ABLATION_ROWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub alpha: f64,
    pub seed: u64,
    pub epoch: usize,
    pub cumulative_reward: f64,
    pub mapd: f64,
    pub uplift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    /// One row per (α, seed), at the final epoch.
    pub rows: Vec<AblationRow>,
    /// Every epoch of every run.
    pub trace: Vec<AblationRow>,
}

impl AblationTable {
    /// Final rows of one seed, in α order as run.
    pub fn seed_rows(&self, seed: u64) -> Vec<&AblationRow> {
        self.rows.iter().filter(|r| r.seed == seed).collect()
    }
}

/// Trains one agent per `(α, seed)` with α pinned and evaluates its policy
/// after every epoch on the first [`ABLATION_ROWS`] test rows.
#[allow(clippy::too_many_arguments)]
pub fn alpha_ablation<T: crate::Scalar>(
    train_transitions: &[Transition],
    encoder: &StateEncoder,
    test_rows: &[DatasetRow],
    alphas: &[f64],
    seeds: &[u64],
    config: &CqlConfig,
    evaluator: &dyn PriceResponse,
    reward: &RewardParams,
) -> Result<AblationTable> {
    let rows = &test_rows[..test_rows.len().min(ABLATION_ROWS)];
    let mut table = AblationTable {
        rows: Vec::new(),
        trace: Vec::new(),
    };
    for &alpha in alphas {
        for &seed in seeds {
            let cfg = CqlConfig {
                fixed_alpha: Some(alpha),
                seed,
                ..config.clone()
            };
            let mut trace = Vec::new();
            train::<T>(train_transitions, &cfg, |epoch, agent| {
                let policy = CqlPolicy::new(encoder.clone(), &agent.actor);
                let apps: Vec<_> = rows.iter().map(|r| &r.app).collect();
                let rep = evaluate_prices("cql", policy.prices(&apps)?, rows, evaluator, reward)?;
                trace.push(AblationRow {
                    alpha,
                    seed,
                    epoch,
                    cumulative_reward: rep.cumulative_reward,
                    mapd: rep.mapd,
                    uplift: rep.uplift,
                });
                Ok(())
            })?;
            if let Some(last) = trace.last() {
                log::info!("ablation alpha {alpha} seed {seed}: mapd {:.4} reward {:.1}", last.mapd, last.cumulative_reward);
                table.rows.push(last.clone());
            }
            table.trace.extend(trace);
        }
    }
    Ok(table)
}
