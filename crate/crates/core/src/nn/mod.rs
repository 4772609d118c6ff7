//! Dense feed-forward networks with cached reverse-mode gradients, Adam with
//! decoupled weight decay, inverted dropout, and min-max scaling.

mod adam;
mod matrix;
mod network;
mod scaler;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::{AdamState, ScalarAdam};
pub use matrix::Matrix;
pub use network::{Activation, DenseLayer, ForwardCache, Gradients, LayerGradient, Network};
pub use scaler::MinMaxScaler;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "credit-pricer/network";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a network plus (optionally) its optimizer state.
///
/// JSON layout:
///
/// ```text
/// { "format": "credit-pricer/network", "version": 1, "scalar": "f32" | "f64",
///   "network": { "layers": [ { "weights": { "rows", "cols", "data": [...] },
///                              "biases": [...], "activation": "relu"|"tanh"|"identity",
///                              "dropout_rate": 0.2 }, ... ] },
///   "optimizer": null | { "learning_rate", "beta1", "beta2", "epsilon", "weight_decay",
///                         "step", "first_moment": [[...]], "second_moment": [[...]] } }
/// ```
///
/// Weights are row-major `out × in`. Numbers are written in shortest
/// round-trip decimal form, so reload is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCheckpoint<T> {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub network: Network<T>,
    pub optimizer: Option<AdamState<T>>,
}

impl<T: Scalar> NetworkCheckpoint<T> {
    pub fn new(network: Network<T>, optimizer: Option<AdamState<T>>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            scalar: T::NAME.to_string(),
            network,
            optimizer,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.scalar != T::NAME {
            return Err(Error::Data(format!(
                "checkpoint holds {} parameters, expected {}",
                ck.scalar,
                T::NAME
            )));
        }
        // Re-validate chaining and finiteness.
        let network = Network::new(ck.network.layers().to_vec())?;
        Ok(Self { network, ..ck })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_reload_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net: Network<f32> = Network::mlp(4, &[8, 8], 2, Activation::Relu, 0.2, &mut rng).unwrap();
        let mut opt = AdamState::new(&net, 1e-3, 1e-4);
        let x = Matrix::from_vec(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (_, cache) = net.forward_cached(&x, &mut rng).unwrap();
        let (g, _) = net.backward(&cache, &Matrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap()).unwrap();
        opt.step(&mut net, &g).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        NetworkCheckpoint::new(net.clone(), Some(opt.clone())).save(&path).unwrap();
        let back = NetworkCheckpoint::<f32>::load(&path).unwrap();
        assert_eq!(back.network, net);
        assert_eq!(back.optimizer.unwrap(), opt);
        assert!(NetworkCheckpoint::<f64>::load(&path).is_err());
    }
}
