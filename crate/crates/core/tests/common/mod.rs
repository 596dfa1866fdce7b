//! Test-side reference computations, written independently of the library
//! code paths they check (LU instead of Cholesky, explicit loops, brute force).
#![allow(dead_code)]

use mmbo::linalg::{Matrix, Vector};
use mmbo::problem::{AnalyticProblem, BilevelProblem, SyntheticBlock, SyntheticQuadraticProblem};

/// `y(x) = A⁻¹(Bx + c)` by LU.
pub fn lower(blk: &SyntheticBlock, x: &Vector) -> Vector {
    blk.a.clone().lu().solve(&(&blk.b * x + &blk.c)).expect("A is invertible")
}

/// `α(x) = (pᵀx + qᵀy(x) + r) / μ_f` (unconstrained dual).
pub fn dual(blk: &SyntheticBlock, x: &Vector, mu_f: f64) -> f64 {
    (blk.p.dot(x) + blk.q.dot(&lower(blk, x)) + blk.r) / mu_f
}

/// `F(x)` with the dual maximized in closed form: `ℓ²/(2μ_f) + ½xᵀMx + sᵀy`.
pub fn objective(p: &SyntheticQuadraticProblem, x: &Vector) -> f64 {
    let mu_f = p.profile().mu_f;
    let total: f64 = p
        .blocks()
        .iter()
        .map(|blk| {
            let y = lower(blk, x);
            let l = blk.p.dot(x) + blk.q.dot(&y) + blk.r;
            l * l / (2.0 * mu_f) + 0.5 * x.dot(&(&blk.m * x)) + blk.s.dot(&y)
        })
        .sum();
    total / p.blocks().len() as f64
}

/// `∇F(x) = mean_i [α_i (p_i + B_iᵀA_i⁻¹q_i) + M_i x + B_iᵀA_i⁻¹s_i]`.
pub fn gradient(p: &SyntheticQuadraticProblem, x: &Vector) -> Vector {
    let mu_f = p.profile().mu_f;
    let mut g = Vector::zeros(x.len());
    for blk in p.blocks() {
        let lu = blk.a.clone().lu();
        let alpha = dual(blk, x, mu_f);
        let aq = lu.solve(&blk.q).unwrap();
        let as_ = lu.solve(&blk.s).unwrap();
        g += (&blk.p + blk.b.transpose() * aq) * alpha + &blk.m * x + blk.b.transpose() * as_;
    }
    g / p.blocks().len() as f64
}

/// Central differences of `f` at `x`.
pub fn central_fd(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |j, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[j] += h;
        b[j] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

pub fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
}

/// AUC by enumerating every positive/negative pair; ties count ½.
pub fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l > 0.0).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l <= 0.0).map(|(&s, _)| s).collect();
    pair_fraction(&pos, &neg)
}

fn pair_fraction(pos: &[f64], neg: &[f64]) -> f64 {
    let mut won = 0.0;
    for &p in pos {
        for &n in neg {
            won += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    won / (pos.len() * neg.len()) as f64
}

/// Partial AUC over the `⌊n₋ρ⌋` highest-scoring negatives, equal scores
/// ordered by position.
pub fn brute_pauc(scores: &[f64], labels: &[f64], rho: f64) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l > 0.0).map(|(&s, _)| s).collect();
    let mut neg: Vec<(usize, f64)> =
        scores.iter().zip(labels).enumerate().filter(|(_, (_, &l))| l <= 0.0).map(|(i, (&s, _))| (i, s)).collect();
    neg.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let k = (neg.len() as f64 * rho).floor() as usize;
    let top: Vec<f64> = neg[..k].iter().map(|&(_, s)| s).collect();
    pair_fraction(&pos, &top)
}

/// `h(x) = vᵀ tanh(W x)` from the flat `[W row-major, v]` layout.
pub fn tanh_score(flat: &[f64], dim: usize, hidden: usize, x: &[f64]) -> f64 {
    (0..hidden)
        .map(|r| {
            let pre: f64 = (0..dim).map(|c| flat[r * dim + c] * x[c]).sum();
            flat[hidden * dim + r] * pre.tanh()
        })
        .sum()
}

pub fn random_matrix(rng: &mut impl rand::Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut impl rand::Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Check that the library's analytic accessors agree with the references.
pub fn assert_matches_reference(p: &SyntheticQuadraticProblem, x: &Vector) {
    for (i, blk) in p.blocks().iter().enumerate() {
        assert!((p.lower_solution(i, x) - lower(blk, x)).amax() < 1e-9);
    }
}
