//! Maximum-likelihood logistic regression by IRLS (Newton–Raphson).

use serde::{Deserialize, Serialize};

use super::metrics::{auc, log_likelihood, mcfadden_pseudo_r2};
use super::PriceResponse;
use crate::error::{Error, Result};
use crate::market::demand::sigmoid;
use crate::market::{DatasetRow, FeatureSpec, LoanApplication};
use crate::nn::Matrix;

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Coefficient magnitude taken as evidence of (quasi-)separation.
const DIVERGENCE_BOUND: f64 = 30.0;

/// Result of fitting a logistic model on a raw design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the penalized score at the returned point.
    pub gradient_norm: f64,
    pub converged: bool,
    pub log_likelihood: f64,
}

/// Fits `P(y) = σ(b₀ + x·β)` maximizing `LL − (λ/2)·‖β‖²`; the intercept is
/// never penalized. `x` has no intercept column.
pub fn fit_design(x: &Matrix<f64>, y: &[bool], l2_lambda: f64) -> Result<DesignFit> {
    let n = x.rows();
    let p = x.cols();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "logistic labels",
            expected: n,
            got: y.len(),
        });
    }
    if !(l2_lambda >= 0.0 && l2_lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("l2 lambda {l2_lambda} must be >= 0")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("logistic design".into()));
    }
    let n_pos = y.iter().filter(|v| **v).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Fit("labels need at least one positive and one negative".into()));
    }
    let yf: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();

    // Design with a leading intercept column.
    let d = p + 1;
    let mut xa = Matrix::zeros(n, d);
    for i in 0..n {
        let row = xa.row_mut(i);
        row[0] = 1.0;
        row[1..].copy_from_slice(x.row(i));
    }

    let base = n_pos as f64 / n as f64;
    let mut beta = vec![0.0; d];
    beta[0] = (base / (1.0 - base)).ln();

    let objective = |beta: &[f64]| -> (f64, Vec<f64>) {
        let eta = linear_predictor(&xa, beta);
        let probs: Vec<f64> = eta.iter().map(|&z| sigmoid(z)).collect();
        let ll = log_likelihood_logits(&eta, &yf);
        let pen = 0.5 * l2_lambda * beta[1..].iter().map(|b| b * b).sum::<f64>();
        (ll - pen, probs)
    };

    let (mut obj, mut probs) = objective(&beta);
    let mut iterations = 0;
    let mut grad = score(&xa, &yf, &probs, &beta, l2_lambda);
    let mut gnorm = max_abs(&grad);
    while gnorm >= GRADIENT_TOLERANCE && iterations < MAX_ITERATIONS {
        iterations += 1;
        let hessian = information(&xa, &probs, l2_lambda);
        let step = cholesky_solve(hessian, d, &grad)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let (cand_obj, cand_probs) = objective(&cand);
            if cand_obj.is_finite() && cand_obj >= obj - 1e-12 * obj.abs().max(1.0) {
                beta = cand;
                obj = cand_obj;
                probs = cand_probs;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        grad = score(&xa, &yf, &probs, &beta, l2_lambda);
        gnorm = max_abs(&grad);
        if !accepted {
            break;
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Fit("coefficients diverged; try l2 > 0".into()));
        }
    }
    let converged = gnorm < GRADIENT_TOLERANCE;
    if beta.iter().any(|b| b.abs() > DIVERGENCE_BOUND) {
        return Err(Error::Fit(format!(
            "|coef| > {DIVERGENCE_BOUND} after {iterations} iterations: the data look separable; try l2 > 0"
        )));
    }
    if !converged {
        log::warn!("IRLS stopped after {iterations} iterations, score norm {gnorm:.3e}");
    }
    let eta = linear_predictor(&xa, &beta);
    Ok(DesignFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        iterations,
        gradient_norm: gnorm,
        converged,
        log_likelihood: log_likelihood_logits(&eta, &yf),
    })
}

fn linear_predictor(xa: &Matrix<f64>, beta: &[f64]) -> Vec<f64> {
    (0..xa.rows())
        .map(|i| xa.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect()
}

/// Log-likelihood from logits, stable for large |η|.
fn log_likelihood_logits(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&z, &y)| {
            // log σ(z) = −softplus(−z); log(1 − σ(z)) = −softplus(z)
            let softplus = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
            if y > 0.5 {
                -softplus(-z)
            } else {
                -softplus(z)
            }
        })
        .sum()
}

/// `Xᵀ(y − p) − λβ` with the intercept unpenalized.
fn score(xa: &Matrix<f64>, y: &[f64], probs: &[f64], beta: &[f64], l2: f64) -> Vec<f64> {
    let d = xa.cols();
    let mut g = vec![0.0; d];
    for i in 0..xa.rows() {
        let r = y[i] - probs[i];
        for (gj, xj) in g.iter_mut().zip(xa.row(i)) {
            *gj += r * xj;
        }
    }
    for j in 1..d {
        g[j] -= l2 * beta[j];
    }
    g
}

/// `XᵀWX + λI` (intercept unpenalized), row-major d×d.
fn information(xa: &Matrix<f64>, probs: &[f64], l2: f64) -> Vec<f64> {
    let d = xa.cols();
    let mut xw = xa.clone();
    for (i, p) in probs.iter().enumerate() {
        let s = (p * (1.0 - p)).sqrt();
        for v in xw.row_mut(i) {
            *v *= s;
        }
    }
    let h = xw.t_matmul(&xw).expect("shapes agree");
    let mut h = h.into_vec();
    for j in 1..d {
        h[j * d + j] += l2;
    }
    h
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `A x = b` for symmetric positive definite `A`.
fn cholesky_solve(mut a: Vec<f64>, d: usize, b: &[f64]) -> Result<Vec<f64>> {
    let scale = (0..d).map(|j| a[j * d + j]).fold(0.0, f64::max).max(1e-300);
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 1e-11 * scale) {
            // Column 0 is the intercept; report design column indices.
            return Err(Error::RankDeficient(j));
        }
        let l = diag.sqrt();
        a[j * d + j] = l;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / l;
        }
    }
    let mut z = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            z[i] -= a[i * d + k] * z[k];
        }
        z[i] /= a[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            z[i] -= a[k * d + i] * z[k];
        }
        z[i] /= a[i * d + i];
    }
    Ok(z)
}

/// Fit statistics stored alongside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_rows: usize,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub pseudo_r2: f64,
    pub auc: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticModel {
    pub spec: FeatureSpec,
    /// Names aligned with `coefficients`.
    pub terms: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub l2_lambda: f64,
    pub diagnostics: Option<FitDiagnostics>,
}

impl LogisticModel {
    pub fn new(spec: FeatureSpec, intercept: f64, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                context: "logistic coefficients",
                expected: spec.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            spec,
            terms: spec.names(),
            intercept,
            coefficients,
            l2_lambda: 0.0,
            diagnostics: None,
        })
    }

    pub fn logit(&self, app: &LoanApplication, rate: f64) -> f64 {
        let (offset, slope) = self.spec.offset_and_slope(&self.coefficients, app);
        self.intercept + offset + slope * rate
    }

    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|i| self.coefficients[i])
    }
}

impl PriceResponse for LogisticModel {
    fn accept_probability(&self, app: &LoanApplication, rate: f64) -> f64 {
        sigmoid(self.logit(app, rate))
    }

    fn accept_probabilities(&self, app: &LoanApplication, rates: &[f64]) -> Vec<f64> {
        let (offset, slope) = self.spec.offset_and_slope(&self.coefficients, app);
        rates.iter().map(|r| sigmoid(self.intercept + offset + slope * r)).collect()
    }

    fn id(&self) -> String {
        match (self.spec.price_interactions, self.l2_lambda > 0.0) {
            (false, false) => "logistic".into(),
            (false, true) => format!("logistic-l2-{}", self.l2_lambda),
            (true, false) => "logistic-fdpe".into(),
            (true, true) => format!("logistic-fdpe-l2-{}", self.l2_lambda),
        }
    }
}

/// Design matrix and labels of logged rows at their offered rates.
pub fn design(rows: &[DatasetRow], spec: FeatureSpec) -> (Matrix<f64>, Vec<bool>) {
    let mut data = Vec::with_capacity(rows.len() * spec.len());
    let mut buf = Vec::with_capacity(spec.len());
    for r in rows {
        spec.row_into(&r.app, r.offered_rate, &mut buf);
        data.extend_from_slice(&buf);
    }
    let x = Matrix::from_vec(rows.len(), spec.len(), data).expect("sized");
    (x, rows.iter().map(|r| r.accept).collect())
}

/// Fits a logistic price-response model on logged rows.
pub fn fit_logistic(rows: &[DatasetRow], spec: FeatureSpec, l2_lambda: f64) -> Result<LogisticModel> {
    if rows.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let (x, y) = design(rows, spec);
    let fit = fit_design(&x, &y, l2_lambda)?;
    let mut model = LogisticModel::new(spec, fit.intercept, fit.coefficients)?;
    model.l2_lambda = l2_lambda;
    let probs: Vec<f64> = rows.iter().map(|r| model.accept_probability(&r.app, r.offered_rate)).collect();
    let n_pos = y.iter().filter(|v| **v).count() as f64;
    let base = n_pos / y.len() as f64;
    model.diagnostics = Some(FitDiagnostics {
        n_rows: rows.len(),
        log_likelihood: log_likelihood(&probs, &y),
        null_log_likelihood: log_likelihood(&vec![base; y.len()], &y),
        pseudo_r2: mcfadden_pseudo_r2(&probs, &y)?,
        auc: auc(&probs, &y)?,
        iterations: fit.iterations,
        gradient_norm: fit.gradient_norm,
        converged: fit.converged,
    });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::application::sample_application;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_feature_sign() {
        let xs: Vec<f64> = (-50..50).map(|i| i as f64 / 10.0 + 0.05).collect();
        let y: Vec<bool> = xs.iter().map(|&x| x > 0.0).collect();
        let x = Matrix::from_vec(xs.len(), 1, xs).unwrap();
        let fit = fit_design(&x, &y, 0.1).unwrap();
        assert!(fit.coefficients[0] > 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn separable_without_penalty_is_reported() {
        let xs: Vec<f64> = (-50..50).map(|i| i as f64 / 10.0 + 0.05).collect();
        let y: Vec<bool> = xs.iter().map(|&x| x > 0.0).collect();
        let x = Matrix::from_vec(xs.len(), 1, xs).unwrap();
        let r = fit_design(&x, &y, 0.0);
        assert!(matches!(r, Err(Error::Fit(_))), "{r:?}");
    }

    #[test]
    fn intercept_only_closed_form() {
        let y: Vec<bool> = (0..1000).map(|i| i % 10 < 3).collect();
        let x = Matrix::zeros(1000, 0);
        let fit = fit_design(&x, &y, 0.0).unwrap();
        assert!((fit.intercept - (0.3f64 / 0.7).ln()).abs() < 1e-10);
        assert!((fit.intercept + 0.847).abs() < 1e-3);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let v: f64 = rng.random();
            data.extend_from_slice(&[v, v]);
            y.push(rng.random::<f64>() < 0.5);
        }
        let x = Matrix::from_vec(n, 2, data).unwrap();
        assert!(matches!(fit_design(&x, &y, 0.0), Err(Error::RankDeficient(2))));
    }

    #[test]
    fn score_equations_hold_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 3000;
        let beta = [0.8, -1.2, 0.3];
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let eta: f64 = -0.4 + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            y.push(rng.random::<f64>() < sigmoid(eta));
            data.extend(row);
        }
        let x = Matrix::from_vec(n, 3, data).unwrap();
        for lambda in [0.0, 2.5] {
            let fit = fit_design(&x, &y, lambda).unwrap();
            let mut g = [0.0; 4];
            for i in 0..n {
                let row = x.row(i);
                let eta = fit.intercept + row.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum::<f64>();
                let r = if y[i] { 1.0 } else { 0.0 } - sigmoid(eta);
                g[0] += r;
                for j in 0..3 {
                    g[j + 1] += r * row[j];
                }
            }
            for j in 0..3 {
                g[j + 1] -= lambda * fit.coefficients[j];
            }
            assert!(max_abs(&g) < 1e-6, "{g:?}");
        }
    }

    #[test]
    fn zero_model_and_odds_ratio() {
        let app = sample_application();
        let zero = LogisticModel::new(FeatureSpec::PLAIN, 0.0, vec![0.0; 14]).unwrap();
        assert_eq!(zero.accept_probability(&app, 7.0), 0.5);
        let mut c = vec![0.0; 14];
        c[0] = -0.6599;
        c[7] = 0.4;
        let m = LogisticModel::new(FeatureSpec::PLAIN, 1.2, c).unwrap();
        let odds = |p: f64| p / (1.0 - p);
        let ratio = odds(m.accept_probability(&app, 6.0)) / odds(m.accept_probability(&app, 5.0));
        assert!((ratio - (-0.6599f64).exp()).abs() < 1e-12);
        assert!((ratio - 0.517).abs() < 1e-3);
    }

    #[test]
    fn fdpe_with_zero_interactions_nests_plain() {
        let plain_c: Vec<f64> = (0..14).map(|i| (i as f64 * 0.7).cos() * 0.3).collect();
        let plain = LogisticModel::new(FeatureSpec::PLAIN, -0.2, plain_c.clone()).unwrap();
        let mut fdpe_c = plain_c;
        fdpe_c.resize(27, 0.0);
        let fdpe = LogisticModel::new(FeatureSpec::FDPE, -0.2, fdpe_c).unwrap();
        let mut app = sample_application();
        for fico in [560, 700, 810] {
            app.fico = fico;
            for r in [2.5, 6.1, 12.5] {
                assert_eq!(plain.accept_probability(&app, r), fdpe.accept_probability(&app, r));
            }
        }
    }
}
