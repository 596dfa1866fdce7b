//! Exact ranking metrics.

use crate::error::{Error, Result};

fn split(scores: &[f64], labels: &[f64]) -> Result<(Vec<f64>, Vec<(usize, f64)>)> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, (&s, &y)) in scores.iter().zip(labels).enumerate() {
        if s.is_nan() {
            return Err(Error::UndefinedMetric(format!("score {i} is NaN")));
        }
        if y > 0.0 {
            pos.push(s);
        } else {
            neg.push((i, s));
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric("need at least one positive and one negative".into()));
    }
    Ok((pos, neg))
}

/// Pairwise count of positives above `negs`, ties counted ½, in
/// `O((n₊ + n₋) log n)`.
fn pair_wins(pos: &[f64], negs: &[f64]) -> f64 {
    let mut sorted = negs.to_vec();
    sorted.sort_by(f64::total_cmp);
    pos.iter()
        .map(|&s| {
            let below = sorted.partition_point(|&n| n < s);
            let not_above = sorted.partition_point(|&n| n <= s);
            below as f64 + 0.5 * (not_above - below) as f64
        })
        .sum()
}

/// Fraction of (positive, negative) pairs ranked correctly, ties ½.
/// Labels are positive when `> 0`.
pub fn metric_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (pos, neg) = split(scores, labels)?;
    let negs: Vec<f64> = neg.into_iter().map(|(_, s)| s).collect();
    Ok(pair_wins(&pos, &negs) / (pos.len() * negs.len()) as f64)
}

/// AUC against the top `K = ⌊n₋ ρ⌋` negatives only. Negatives tied at the
/// cut-off score are taken in order of their index.
pub fn metric_pauc(scores: &[f64], labels: &[f64], rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::config(format!("rho = {rho} must lie in (0, 1]")));
    }
    let (pos, mut neg) = split(scores, labels)?;
    let k = (neg.len() as f64 * rho).floor() as usize;
    if k == 0 {
        return Err(Error::UndefinedMetric(format!(
            "rho = {rho} selects no negatives out of {}",
            neg.len()
        )));
    }
    neg.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top: Vec<f64> = neg[..k].iter().map(|&(_, s)| s).collect();
    Ok(pair_wins(&pos, &top) / (pos.len() * k) as f64)
}
