use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam moments and hyper-parameters for one network. Weight decay is
/// decoupled from the moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &Network<T>, learning_rate: f64, weight_decay: f64) -> Self {
        let shapes: Vec<Vec<T>> = net
            .parameters_shapes()
            .into_iter()
            .map(|n| vec![T::zero(); n])
            .collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            step: 0,
            first_moment: shapes.clone(),
            second_moment: shapes,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of `net` in place.
    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
        let expected: Vec<usize> = net.parameters_shapes();
        let got: Vec<usize> = grads.tensors().map(|t| t.len()).collect();
        if expected != got {
            return Err(Error::DimensionMismatch {
                context: "adam gradients",
                expected: expected.iter().sum(),
                got: got.iter().sum(),
            });
        }
        if self.first_moment.iter().map(Vec::len).ne(expected.iter().copied()) {
            return Err(Error::DimensionMismatch {
                context: "adam moments",
                expected: expected.iter().sum(),
                got: self.first_moment.iter().map(Vec::len).sum(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient passed to adam".into()));
        }

        self.step += 1;
        let t = self.step as f64;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let c1 = T::of(1.0 - self.beta1.powf(t));
        let c2 = T::of(1.0 - self.beta2.powf(t));
        let lr = T::of(self.learning_rate);
        let eps = T::of(self.epsilon);
        let decay = T::of(1.0 - self.learning_rate * self.weight_decay);

        for (((params, g), m), v) in net
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            for i in 0..params.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        net.ensure_finite()
    }
}

impl<T: Scalar> Network<T> {
    pub(crate) fn parameters_shapes(&self) -> Vec<usize> {
        self.layers()
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.biases.len()])
            .collect()
    }
}

/// Adam on a single scalar parameter (used for the log-temperature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub learning_rate: f64,
    step: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            step: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    /// Returns the updated value after a descent step along `grad`.
    pub fn step(&mut self, value: f64, grad: f64) -> f64 {
        self.step += 1;
        let t = self.step as f64;
        self.m = 0.9 * self.m + 0.1 * grad;
        self.v = 0.999 * self.v + 0.001 * grad * grad;
        let m_hat = self.m / (1.0 - 0.9f64.powf(t));
        let v_hat = self.v / (1.0 - 0.999f64.powf(t));
        value - self.learning_rate * m_hat / (v_hat.sqrt() + 1e-8)
    }
}
