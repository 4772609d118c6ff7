//! Shallow neural price-response classifier.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, mcfadden_pseudo_r2};
use super::PriceResponse;
use crate::error::{Error, Result};
use crate::market::demand::sigmoid;
use crate::market::{DatasetRow, FeatureSpec, LoanApplication};
use crate::nn::{Activation, AdamState, Matrix, MinMaxScaler, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralFitConfig {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for NeuralFitConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            max_epochs: 40,
            batch_size: 256,
            learning_rate: 2e-3,
            weight_decay: 0.0,
            patience: 4,
            seed: 333,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralFitReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub train_auc: f64,
    pub train_pseudo_r2: f64,
}

/// Mean binary cross-entropy of logits.
fn bce(logits: &[f64], y: &[f64]) -> f64 {
    let softplus = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
    logits.iter().zip(y).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / logits.len().max(1) as f64
}

/// A binary classifier over min-max-scaled inputs, trained with Adam on
/// cross-entropy and early stopping on the validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralClassifier {
    pub scaler: MinMaxScaler<f64>,
    pub network: Network<f64>,
}

impl NeuralClassifier {
    pub fn fit(
        x_train: &Matrix<f64>,
        y_train: &[bool],
        x_val: &Matrix<f64>,
        y_val: &[bool],
        cfg: &NeuralFitConfig,
    ) -> Result<(Self, NeuralFitReport)> {
        if x_train.rows() == 0 || x_train.rows() != y_train.len() || x_val.rows() != y_val.len() {
            return Err(Error::Data("neural fit needs aligned, nonempty training data".into()));
        }
        if cfg.batch_size == 0 || cfg.max_epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and max_epochs must be >= 1".into()));
        }
        let mut scaler = MinMaxScaler::new(0.0, 1.0);
        let rows: Vec<&[f64]> = (0..x_train.rows()).map(|i| x_train.row(i)).collect();
        scaler.fit(&rows)?;
        let scale = |x: &Matrix<f64>| -> Result<Matrix<f64>> {
            let mut out = x.clone();
            for i in 0..out.rows() {
                scaler.transform_inplace(out.row_mut(i))?;
            }
            Ok(out)
        };
        let xt = scale(x_train)?;
        let (xv, yv) = if x_val.rows() > 0 { (scale(x_val)?, y_val) } else { (xt.clone(), y_train) };
        let yt: Vec<f64> = y_train.iter().map(|&b| f64::from(u8::from(b))).collect();
        let yvf: Vec<f64> = yv.iter().map(|&b| f64::from(u8::from(b))).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut network = Network::mlp(xt.cols(), &cfg.hidden, 1, Activation::Relu, 0.0, &mut rng)?;
        let mut adam = AdamState::new(&network, cfg.learning_rate, cfg.weight_decay);
        let val_loss = |net: &Network<f64>| -> Result<f64> {
            let z = net.predict(&xv)?.into_vec();
            Ok(bce(&z, &yvf))
        };

        let mut best = (val_loss(&network)?, network.clone(), 0);
        let mut order: Vec<usize> = (0..xt.rows()).collect();
        let mut epochs_run = 0;
        for epoch in 1..=cfg.max_epochs {
            epochs_run = epoch;
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let xb = xt.select_rows(chunk);
                let (z, cache) = network.forward_cached(&xb, &mut rng)?;
                let m = chunk.len() as f64;
                let grad: Vec<f64> = z
                    .as_slice()
                    .iter()
                    .zip(chunk)
                    .map(|(&z, &i)| (sigmoid(z) - yt[i]) / m)
                    .collect();
                let (g, _) = network.backward(&cache, &Matrix::from_vec(chunk.len(), 1, grad)?)?;
                adam.step(&mut network, &g)?;
            }
            let loss = val_loss(&network)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("neural response validation loss".into()));
            }
            if loss < best.0 {
                best = (loss, network.clone(), epoch);
            } else if epoch - best.2 >= cfg.patience {
                break;
            }
        }
        let model = Self {
            scaler,
            network: best.1,
        };
        let probs = model.predict_scaled(&xt)?;
        let report = NeuralFitReport {
            epochs_run,
            best_epoch: best.2,
            best_validation_loss: best.0,
            train_auc: auc(&probs, y_train)?,
            train_pseudo_r2: mcfadden_pseudo_r2(&probs, y_train)?,
        };
        Ok((model, report))
    }

    fn predict_scaled(&self, xs: &Matrix<f64>) -> Result<Vec<f64>> {
        Ok(self.network.predict(xs)?.into_vec().into_iter().map(sigmoid).collect())
    }

    /// Probabilities for raw (unscaled) inputs.
    pub fn predict(&self, x: &Matrix<f64>) -> Result<Vec<f64>> {
        let mut xs = x.clone();
        for i in 0..xs.rows() {
            self.scaler.transform_inplace(xs.row_mut(i))?;
        }
        self.predict_scaled(&xs)
    }
}

/// Neural price-response model over the plain response design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralResponseModel {
    pub spec: FeatureSpec,
    pub classifier: NeuralClassifier,
    pub report: Option<NeuralFitReport>,
}

impl PriceResponse for NeuralResponseModel {
    fn accept_probability(&self, app: &LoanApplication, rate: f64) -> f64 {
        self.accept_probabilities(app, &[rate])[0]
    }

    fn accept_probabilities(&self, app: &LoanApplication, rates: &[f64]) -> Vec<f64> {
        let mut data = Vec::with_capacity(rates.len() * self.spec.len());
        for &r in rates {
            data.extend(self.spec.row(app, r));
        }
        let x = Matrix::from_vec(rates.len(), self.spec.len(), data).expect("sized");
        self.classifier.predict(&x).expect("network input matches design")
    }

    fn id(&self) -> String {
        "neural".into()
    }
}

/// Fits a neural response model; `val` drives early stopping.
pub fn fit_neural_response(train: &[DatasetRow], val: &[DatasetRow], cfg: &NeuralFitConfig) -> Result<NeuralResponseModel> {
    let spec = FeatureSpec::PLAIN;
    let (xt, yt) = super::logistic::design(train, spec);
    let (xv, yv) = super::logistic::design(val, spec);
    let (classifier, report) = NeuralClassifier::fit(&xt, &yt, &xv, &yv, cfg)?;
    Ok(NeuralResponseModel {
        spec,
        classifier,
        report: Some(report),
    })
}
