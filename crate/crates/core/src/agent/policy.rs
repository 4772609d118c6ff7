use serde::{Deserialize, Serialize};

use super::actor::{unscale_action, Actor};
use crate::error::Result;
use crate::market::{LoanApplication, StateEncoder};
use crate::nn::Matrix;
use crate::reward::{MAX_RATE, MIN_RATE};
use crate::scalar::Scalar;

/// Deterministic CQL pricing rule `affine(tanh(μ(s)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqlPolicy {
    pub encoder: StateEncoder,
    pub actor: Actor<f64>,
}

impl CqlPolicy {
    pub fn new<T: Scalar>(encoder: StateEncoder, actor: &Actor<T>) -> Self {
        Self {
            encoder,
            actor: Actor {
                network: actor.network.cast(),
            },
        }
    }

    pub fn prices(&self, apps: &[&LoanApplication]) -> Result<Vec<f64>> {
        let d = self.encoder.dim();
        let mut data = Vec::with_capacity(apps.len() * d);
        for a in apps {
            data.extend(self.encoder.encode(a)?);
        }
        let x = Matrix::from_vec(apps.len(), d, data)?;
        Ok(self
            .actor
            .deterministic(&x)?
            .into_iter()
            .map(|a| unscale_action(a).clamp(MIN_RATE, MAX_RATE))
            .collect())
    }
}
