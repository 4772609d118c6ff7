//! Discrimination and fit diagnostics for binary response models.

use crate::error::{Error, Result};

/// Area under the ROC curve via the Mann–Whitney statistic. Tied scores
/// count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "auc scores vs labels",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("auc scores".into()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Bernoulli log-likelihood with probabilities clamped away from 0 and 1.
pub fn log_likelihood(probs: &[f64], labels: &[bool]) -> f64 {
    const EPS: f64 = 1e-15;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            if y {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// `1 − LL_model / LL_null`, the null model predicting the base rate of
/// `labels`.
pub fn mcfadden_pseudo_r2(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "pseudo-R2 probabilities vs labels",
            expected: labels.len(),
            got: probs.len(),
        });
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::Data("pseudo-R2 needs both classes".into()));
    }
    let base = n_pos as f64 / labels.len() as f64;
    let ll_null = log_likelihood(&vec![base; labels.len()], labels);
    Ok(1.0 - log_likelihood(probs, labels) / ll_null)
}
