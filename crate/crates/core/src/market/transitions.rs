//! Dataset rows to agent transitions.

use serde::{Deserialize, Serialize};

use super::application::LoanApplication;
use super::dataset::DatasetRow;
use super::features::{state_dim, state_features};
use crate::error::{Error, Result};
use crate::nn::MinMaxScaler;
use crate::reward::Transition;

/// Raw state features min-max scaled to [0, 1] with ranges fit on the
/// training rows. Out-of-range values later are not clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEncoder {
    pub scaler: MinMaxScaler<f64>,
}

impl StateEncoder {
    pub fn fit(rows: &[DatasetRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let raw: Vec<Vec<f64>> = rows.iter().map(|r| state_features(&r.app)).collect();
        let mut scaler = MinMaxScaler::new(0.0, 1.0);
        scaler.fit(&raw)?;
        Ok(Self { scaler })
    }

    pub fn dim(&self) -> usize {
        state_dim()
    }

    pub fn encode(&self, app: &LoanApplication) -> Result<Vec<f64>> {
        self.scaler.transform(&state_features(app))
    }
}

/// One transition per row; the successor state is the next row's state.
/// The final row pairs with itself and is excluded from bootstrapping.
pub fn to_transitions(rows: &[DatasetRow], encoder: &StateEncoder) -> Result<Vec<Transition>> {
    if rows.is_empty() {
        return Err(Error::Data("no rows to convert".into()));
    }
    let states = rows.iter().map(|r| encoder.encode(&r.app)).collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    Ok((0..n)
        .map(|i| {
            let last = i + 1 == n;
            Transition {
                state: states[i].clone(),
                action: rows[i].offered_rate,
                reward: rows[i].realized_reward,
                next_state: states[if last { i } else { i + 1 }].clone(),
                exclude_bootstrap: last,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::dataset::Split;
    use crate::market::{generate_applications, MarketConfig};

    fn rows(n: usize) -> Vec<DatasetRow> {
        let cfg = MarketConfig {
            n_applications: n,
            seed: 11,
            ..Default::default()
        };
        generate_applications(&cfg)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, app)| DatasetRow {
                app,
                offered_rate: 5.0 + i as f64,
                accept: i % 2 == 0,
                realized_reward: 10.0 * i as f64,
                split: Split::Train,
                truth_accept_prob: 0.5,
            })
            .collect()
    }

    #[test]
    fn three_rows_last_self_paired() {
        let r = rows(3);
        let enc = StateEncoder::fit(&r).unwrap();
        let t = to_transitions(&r, &enc).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t[2].exclude_bootstrap && !t[0].exclude_bootstrap && !t[1].exclude_bootstrap);
        assert_eq!(t[2].next_state, t[2].state);
        for i in 0..2 {
            assert_eq!(t[i].next_state, t[i + 1].state);
        }
        let rewards: Vec<f64> = t.iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![0.0, 10.0, 20.0]);
    }

    #[test]
    fn encoded_training_states_lie_in_unit_box() {
        let r = rows(500);
        let enc = StateEncoder::fit(&r).unwrap();
        for t in to_transitions(&r, &enc).unwrap() {
            assert_eq!(t.state.len(), enc.dim());
            assert!(t.state.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
