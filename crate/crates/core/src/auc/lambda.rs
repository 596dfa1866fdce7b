//! The smoothed top-K threshold: the minimizer `λ̂` of
//!
//! ```text
//! L(λ) = (K + ε)/n₋ · λ + τ₂/2 · λ² + (1/n₋) Σ_j τ₁ log(1 + exp((h_j − λ)/τ₁))
//! ```
//!
//! over the negative scores `h_j`. Batch versions replace the sum's `1/n₋`
//! by the batch mean and keep the full-data `(K + ε)/n₋`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::scorer::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaConfig {
    /// Number of negatives the threshold should sit below.
    pub k: usize,
    /// Negatives in the full task.
    pub n_minus: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub epsilon: f64,
}

impl LambdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n_minus {
            return Err(Error::config(format!("K = {} must lie in 1..={}", self.k, self.n_minus)));
        }
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err(Error::config("tau1 and tau2 must be positive"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon must be non-negative"));
        }
        Ok(())
    }

    fn linear(&self) -> f64 {
        (self.k as f64 + self.epsilon) / self.n_minus as f64
    }
}

pub fn lambda_objective(lambda: f64, scores_neg: &[f64], cfg: &LambdaConfig) -> f64 {
    let mean = scores_neg
        .iter()
        .map(|&h| cfg.tau1 * softplus((h - lambda) / cfg.tau1))
        .sum::<f64>()
        / scores_neg.len() as f64;
    cfg.linear() * lambda + 0.5 * cfg.tau2 * lambda * lambda + mean
}

pub fn lambda_grad(lambda: f64, scores_neg: &[f64], cfg: &LambdaConfig) -> f64 {
    let mean = scores_neg
        .iter()
        .map(|&h| sigmoid((h - lambda) / cfg.tau1))
        .sum::<f64>()
        / scores_neg.len() as f64;
    cfg.linear() + cfg.tau2 * lambda - mean
}

pub fn lambda_hess(lambda: f64, scores_neg: &[f64], cfg: &LambdaConfig) -> f64 {
    let mean = scores_neg
        .iter()
        .map(|&h| {
            let q = sigmoid((h - lambda) / cfg.tau1);
            q * (1.0 - q)
        })
        .sum::<f64>()
        / scores_neg.len() as f64;
    cfg.tau2 + mean / cfg.tau1
}

/// Root of [`lambda_grad`] by bisection. The gradient is increasing, so
/// the bracket is grown until it changes sign and then halved to machine
/// resolution.
pub fn solve_lambda(scores_neg: &[f64], cfg: &LambdaConfig) -> Result<f64> {
    cfg.validate()?;
    if scores_neg.is_empty() {
        return Err(Error::config("no negative scores"));
    }
    let (lo0, hi0) = scores_neg
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &s| (l.min(s), h.max(s)));
    let width = (hi0 - lo0).max(cfg.tau1).max(1.0);
    let (mut lo, mut hi) = (lo0 - width, hi0 + width);
    let mut grow = 0;
    while lambda_grad(lo, scores_neg, cfg) > 0.0 || lambda_grad(hi, scores_neg, cfg) < 0.0 {
        let w = 2.0 * (hi - lo);
        lo -= w;
        hi += w;
        grow += 1;
        if grow > 200 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Numerical("could not bracket the threshold".into()));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lambda_grad(mid, scores_neg, cfg) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
