use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    /// `out × in`.
    pub weights: Matrix<T>,
    pub biases: Vec<T>,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl<T: Scalar> DenseLayer<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::of(rng.random_range(-limit..limit)))
            .collect();
        Self {
            weights: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
            biases: vec![T::zero(); fan_out],
            activation,
            dropout_rate,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    layers: Vec<DenseLayer<T>>,
}

/// Activations recorded by a training-mode forward pass, consumed by
/// [`Network::backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    inputs: Vec<Matrix<T>>,
    outputs: Vec<Matrix<T>>,
    masks: Vec<Option<Vec<T>>>,
}

impl<T> ForwardCache<T> {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Gradient of a scalar loss with respect to every parameter of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGradient<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient<T> {
    pub weights: Matrix<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                    biases: vec![T::zero(); l.output_dim()],
                })
                .collect(),
        }
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x += *y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weights.map_inplace(|x| x * s);
            for b in &mut l.biases {
                *b *= s;
            }
        }
    }

    /// Flat view in the same order as [`Network::parameters`].
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.biases.iter().all(|b| b.is_finite()))
    }

    pub(crate) fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    context: "layer chaining",
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.biases.len() != l.output_dim() {
                return Err(Error::DimensionMismatch {
                    context: "bias length",
                    expected: l.output_dim(),
                    got: l.biases.len(),
                });
            }
            if !(0.0..1.0).contains(&l.dropout_rate) {
                return Err(Error::InvalidConfig(format!(
                    "dropout rate {} outside [0, 1)",
                    l.dropout_rate
                )));
            }
        }
        let net = Self { layers };
        net.ensure_finite()?;
        Ok(net)
    }

    /// MLP `input → hidden... → output` with `hidden_activation` on hidden
    /// layers, identity output, and `dropout` after every hidden layer.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for &h in hidden {
            layers.push(DenseLayer::glorot(fan_in, h, hidden_activation, dropout, rng));
            fan_in = h;
        }
        layers.push(DenseLayer::glorot(fan_in, output, Activation::Identity, 0.0, rng));
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.biases.len())
            .sum()
    }

    /// All parameters flattened: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    /// Inverse of [`Network::parameters`].
    pub fn set_parameters(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.parameter_count(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&flat[off..off + w.len()]);
            off += w.len();
            let n = l.biases.len();
            l.biases.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (k, l) in self.layers.iter().enumerate() {
            if !l.weights.is_finite() || !l.biases.iter().all(|b| b.is_finite()) {
                return Err(Error::NonFinite(format!("parameters of layer {k}")));
            }
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward<R: Rng + ?Sized>(&self, input: &[T], training: bool, rng: &mut R) -> Result<Vec<T>> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let out = if training {
            self.forward_cached(&x, rng)?.0
        } else {
            self.predict(&x)?
        };
        Ok(out.into_vec())
    }

    /// Deterministic batch forward (dropout off). Safe to call concurrently.
    pub fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(input)?;
        let mut x = self.affine(0, input)?;
        for k in 1..self.layers.len() {
            x = self.affine(k, &x)?;
        }
        Ok(x)
    }

    /// Training-mode batch forward: dropout active, activations cached.
    pub fn forward_cached<R: Rng + ?Sized>(
        &self,
        input: &Matrix<T>,
        rng: &mut R,
    ) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.forward_cached_with(input, true, rng)
    }

    /// Batch forward with cached activations; `dropout = false` gives the
    /// inference-mode output while still allowing a backward pass.
    pub fn forward_cached_with<R: Rng + ?Sized>(
        &self,
        input: &Matrix<T>,
        dropout: bool,
        rng: &mut R,
    ) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut x = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let a = self.affine(k, &x)?;
            let mask = if dropout && layer.dropout_rate > 0.0 {
                let keep = 1.0 - layer.dropout_rate;
                let scale = T::of(1.0 / keep);
                let m: Vec<T> = (0..a.as_slice().len())
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                Some(m)
            } else {
                None
            };
            let mut next = a.clone();
            if let Some(m) = &mask {
                for (v, s) in next.as_mut_slice().iter_mut().zip(m) {
                    *v *= *s;
                }
            }
            cache.inputs.push(std::mem::replace(&mut x, next));
            cache.outputs.push(a);
            cache.masks.push(mask);
        }
        Ok((x, cache))
    }

    /// Reverse pass. Returns parameter gradients and the gradient with
    /// respect to the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &Matrix<T>,
    ) -> Result<(Gradients<T>, Matrix<T>)> {
        if cache.is_empty() {
            return Err(Error::NoForwardCache);
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "forward cache depth",
                expected: self.layers.len(),
                got: cache.inputs.len(),
            });
        }
        let batch = cache.inputs[0].rows();
        if output_grad.rows() != batch || output_grad.cols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: batch * self.output_dim(),
                got: output_grad.rows() * output_grad.cols(),
            });
        }
        if !output_grad.is_finite() {
            return Err(Error::NonFinite("output gradient".into()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = output_grad.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if let Some(m) = &cache.masks[k] {
                for (v, s) in g.as_mut_slice().iter_mut().zip(m) {
                    *v *= *s;
                }
            }
            for (v, a) in g.as_mut_slice().iter_mut().zip(cache.outputs[k].as_slice()) {
                *v *= layer.activation.derivative_from_output(*a);
            }
            let dw = g.t_matmul(&cache.inputs[k])?;
            let mut db = vec![T::zero(); layer.output_dim()];
            for i in 0..g.rows() {
                for (b, v) in db.iter_mut().zip(g.row(i)) {
                    *b += *v;
                }
            }
            let g_prev = g.matmul(&layer.weights)?;
            grads.push(LayerGradient { weights: dw, biases: db });
            g = g_prev;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    fn check_input(&self, input: &Matrix<T>) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: input.cols(),
            });
        }
        if !input.is_finite() {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// `act(x·Wᵀ + b)` for layer `k`.
    fn affine(&self, k: usize, x: &Matrix<T>) -> Result<Matrix<T>> {
        let layer = &self.layers[k];
        let mut z = x.matmul_t(&layer.weights)?;
        let cols = z.cols();
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            for j in 0..cols {
                row[j] = layer.activation.apply(row[j] + layer.biases[j]);
            }
        }
        Ok(z)
    }

    /// Polyak averaging `self ← (1 − tau)·self + tau·source`.
    pub fn soft_update_from(&mut self, source: &Network<T>, tau: T) -> Result<()> {
        if self.parameter_count() != source.parameter_count() {
            return Err(Error::DimensionMismatch {
                context: "soft update",
                expected: self.parameter_count(),
                got: source.parameter_count(),
            });
        }
        let keep = T::one() - tau;
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            for (d, s) in dst.weights.as_mut_slice().iter_mut().zip(src.weights.as_slice()) {
                *d = keep * *d + tau * *s;
            }
            for (d, s) in dst.biases.iter_mut().zip(&src.biases) {
                *d = keep * *d + tau * *s;
            }
        }
        Ok(())
    }

    /// Same weights in another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weights: Matrix::from_vec(
                        l.weights.rows(),
                        l.weights.cols(),
                        l.weights.as_slice().iter().map(|w| U::of(w.to_f64_lossy())).collect(),
                    )
                    .expect("sized"),
                    biases: l.biases.iter().map(|b| U::of(b.to_f64_lossy())).collect(),
                    activation: l.activation,
                    dropout_rate: l.dropout_rate,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(n: usize, act: Activation) -> DenseLayer<f64> {
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            w.set(i, i, 1.0);
        }
        DenseLayer {
            weights: w,
            biases: vec![0.0; n],
            activation: act,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn identity_layer_passes_through() {
        let net = Network::new(vec![identity_layer(2, Activation::Identity)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(net.forward(&[1.0, 2.0], false, &mut rng).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn relu_layer_clips_negatives() {
        let net = Network::new(vec![identity_layer(2, Activation::Relu)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(net.forward(&[-3.0, 5.0], false, &mut rng).unwrap(), vec![0.0, 5.0]);
    }

    #[test]
    fn two_layer_forward_matches_hand_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net: Network<f64> = Network::mlp(3, &[4], 2, Activation::Tanh, 0.0, &mut rng).unwrap();
        let x = [0.3, -1.2, 0.7];
        let got = net.forward(&x, false, &mut rng).unwrap();

        // Straight-line recomputation from the raw weights.
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        let mut h = [0.0; 4];
        for (i, hi) in h.iter_mut().enumerate() {
            let mut s = l0.biases[i];
            for j in 0..3 {
                s += l0.weights.get(i, j) * x[j];
            }
            *hi = s.tanh();
        }
        for (i, g) in got.iter().enumerate() {
            let mut s = l1.biases[i];
            for j in 0..4 {
                s += l1.weights.get(i, j) * h[j];
            }
            assert!((g - s).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = Network::new(vec![identity_layer(2, Activation::Identity)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            net.forward(&[1.0, 2.0, 3.0], false, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            net.forward(&[f64::NAN, 2.0], false, &mut rng),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn layers_must_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = DenseLayer::<f64>::glorot(3, 4, Activation::Relu, 0.0, &mut rng);
        let b = DenseLayer::<f64>::glorot(5, 1, Activation::Identity, 0.0, &mut rng);
        assert!(Network::new(vec![a, b]).is_err());
    }

    #[test]
    fn linear_scalar_gradient() {
        // f(w) = w·x with x = 2, loss = f.
        let layer = DenseLayer {
            weights: Matrix::from_vec(1, 1, vec![0.7f64]).unwrap(),
            biases: vec![0.0],
            activation: Activation::Identity,
            dropout_rate: 0.0,
        };
        let net = Network::new(vec![layer]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let (_, cache) = net.forward_cached(&x, &mut rng).unwrap();
        let (g, gin) = net
            .backward(&cache, &Matrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(g.layers[0].weights.get(0, 0), 2.0);
        assert_eq!(g.layers[0].biases[0], 1.0);
        assert!((gin.get(0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net: Network<f64> = Network::mlp(3, &[5, 5], 2, Activation::Relu, 0.0, &mut rng).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, -0.6]).unwrap();
        let (_, cache) = net.forward_cached(&x, &mut rng).unwrap();
        let (g, _) = net.backward(&cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_without_cache_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net: Network<f64> = Network::mlp(3, &[5], 1, Activation::Relu, 0.0, &mut rng).unwrap();
        let empty = ForwardCache::default();
        assert!(matches!(
            net.backward(&empty, &Matrix::zeros(1, 1)),
            Err(Error::NoForwardCache)
        ));
    }

    #[test]
    fn dropout_only_in_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net: Network<f64> = Network::mlp(4, &[16], 1, Activation::Relu, 0.5, &mut rng).unwrap();
        let x = [0.5, -0.5, 1.0, 2.0];
        let a = net.forward(&x, false, &mut rng).unwrap();
        let b = net.forward(&x, false, &mut rng).unwrap();
        assert_eq!(a, b);
        let outs: Vec<f64> = (0..20).map(|_| net.forward(&x, true, &mut rng).unwrap()[0]).collect();
        assert!(outs.iter().any(|o| (o - a[0]).abs() > 1e-12));
    }

    #[test]
    fn soft_update_interpolates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src: Network<f64> = Network::mlp(2, &[3], 1, Activation::Relu, 0.0, &mut rng).unwrap();
        let mut dst: Network<f64> = Network::mlp(2, &[3], 1, Activation::Relu, 0.0, &mut rng).unwrap();
        let before = dst.parameters();
        dst.soft_update_from(&src, 0.25).unwrap();
        for ((d, b), s) in dst.parameters().iter().zip(&before).zip(src.parameters()) {
            assert!((d - (0.75 * b + 0.25 * s)).abs() < 1e-15);
        }
    }
}
