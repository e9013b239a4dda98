//! Losses and the softmax map.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;
use crate::error::{Error, Result};

/// Mean squared error over all elements.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mse needs equal nonempty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mse_loss`] w.r.t. `pred`: `2 (p - t) / n`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(String::from("mse gradient length mismatch")));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect())
}

/// Numerically stable softmax. Rejects empty or non-finite input; the output
/// is a probability vector and is invariant to adding a constant to `v`.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Shape(String::from("softmax of empty vector")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(String::from(
            "softmax input contains a non-finite value",
        )));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Cross-entropy of a logit vector against an integer class label:
/// `-log softmax(logits)[label]`, computed in log-space for stability.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Shape(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(String::from(
            "cross-entropy input contains a non-finite value",
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    Ok(log_sum - logits[label])
}

/// Gradient of [`cross_entropy_loss`] w.r.t. the logits:
/// `softmax(logits) - onehot(label)`.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Result<Vec<f64>> {
    let mut g = softmax(logits)?;
    if label >= g.len() {
        return Err(Error::Shape(format!(
            "label {label} out of range for {} logits",
            g.len()
        )));
    }
    g[label] -= 1.0;
    Ok(g)
}
