//! Square-loss AUC min-max surrogate
//!
//! ```text
//! mean₊(h − a)² + mean₋(h − b)² + 2α(c + mean₋ h − mean₊ h) − α²
//! ```
//!
//! evaluated in score space and pulled back through the scorer.

use crate::error::{Error, Result};
use crate::linalg::Vector;

use super::data::{StratifiedBatch, Task};
use super::scorer::TaskParams;

/// Loss value and its partial derivatives with respect to every score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSpaceLoss {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
    pub d_a: f64,
    pub d_b: f64,
    pub d_alpha: f64,
}

pub fn auc_minmax_scores(h_pos: &[f64], h_neg: &[f64], a: f64, b: f64, alpha: f64, c: f64) -> ScoreSpaceLoss {
    let np = h_pos.len() as f64;
    let nn = h_neg.len() as f64;
    let mean_pos = h_pos.iter().sum::<f64>() / np;
    let mean_neg = h_neg.iter().sum::<f64>() / nn;
    let sq_pos = h_pos.iter().map(|h| (h - a).powi(2)).sum::<f64>() / np;
    let sq_neg = h_neg.iter().map(|h| (h - b).powi(2)).sum::<f64>() / nn;
    let margin = c + mean_neg - mean_pos;
    ScoreSpaceLoss {
        value: sq_pos + sq_neg + 2.0 * alpha * margin - alpha * alpha,
        d_pos: h_pos.iter().map(|h| (2.0 * (h - a) - 2.0 * alpha) / np).collect(),
        d_neg: h_neg.iter().map(|h| (2.0 * (h - b) + 2.0 * alpha) / nn).collect(),
        d_a: -2.0 * (mean_pos - a),
        d_b: -2.0 * (mean_neg - b),
        d_alpha: 2.0 * margin - 2.0 * alpha,
    }
}

/// Per-task scalars of the surrogate: margin statistics `a`, `b` and the
/// dual variable `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AucVars {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

/// The surrogate and its gradients for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct AucLoss {
    pub value: f64,
    /// Flat task-parameter gradient.
    pub grad_params: Vector,
    pub grad_a: f64,
    pub grad_b: f64,
    pub grad_alpha: f64,
}

/// Batch estimate of the surrogate at `params`.
pub fn auc_minmax_loss(
    params: &TaskParams,
    vars: AucVars,
    c: f64,
    task: &Task,
    task_id: usize,
    batch: &StratifiedBatch,
) -> Result<AucLoss> {
    if batch.positives.is_empty() || batch.negatives.is_empty() {
        return Err(Error::SingleClassBatch { task: task_id });
    }
    let h_pos = params.scores(task, &batch.positives);
    let h_neg = params.scores(task, &batch.negatives);
    let s = auc_minmax_scores(&h_pos, &h_neg, vars.a, vars.b, vars.alpha, c);
    let rows = batch.all();
    let coeffs: Vec<f64> = s.d_pos.iter().chain(&s.d_neg).copied().collect();
    Ok(AucLoss {
        value: s.value,
        grad_params: params.backprop(task, &rows, &coeffs),
        grad_a: s.d_a,
        grad_b: s.d_b,
        grad_alpha: s.d_alpha,
    })
}
