//! Elementary update rules shared by both variants.

use crate::error::Result;
use crate::linalg::{self, Matrix, Vector};
use crate::problem::DualSet;

/// Euclidean projection onto the dual set.
pub fn project_dual(alpha: &Vector, set: &DualSet) -> Result<Vector> {
    set.validate()?;
    Ok(match *set {
        DualSet::Full => alpha.clone(),
        DualSet::NonNegative => alpha.map(|a| a.max(0.0)),
        DualSet::Box { lo, hi } => alpha.map(|a| a.clamp(lo, hi)),
    })
}

/// Projection onto the centered ball of radius `radius`.
pub fn project_ball(v: &Vector, radius: f64) -> Vector {
    let norm = v.norm();
    if norm <= radius {
        v.clone()
    } else {
        v * (radius / norm)
    }
}

/// `(1 − β₀) z + β₀ Δ`.
pub fn moving_average(z: &Vector, delta: &Vector, beta0: f64) -> Vector {
    z * (1.0 - beta0) + delta * beta0
}

/// Hessian momentum for one block.
///
/// A selected block mixes in the sample and refactorizes, returning
/// `(s', Some(s'⁻¹))`; an unselected one returns `(s, None)`.
pub fn hessian_momentum_update(
    s: &Matrix,
    hess_sample: &Matrix,
    beta1: f64,
    selected: bool,
) -> Result<(Matrix, Option<Matrix>)> {
    if !selected {
        return Ok((s.clone(), None));
    }
    let next = linalg::symmetrize(&(s * (1.0 - beta1) + hess_sample * beta1));
    let inv = linalg::spd_inverse(&next)?;
    Ok((next, Some(inv)))
}

/// One projected gradient step on `γ(v) = ½ vᵀ H v − vᵀ ∇_y f`.
pub fn v_update(
    v: &Vector,
    hess_sample: &Matrix,
    grad_y_f_sample: &Vector,
    eta3: f64,
    gamma_radius: f64,
    selected: bool,
) -> Vector {
    if !selected {
        return v.clone();
    }
    let grad = hess_sample * v - grad_y_f_sample;
    project_ball(&(v - grad * eta3), gamma_radius)
}
