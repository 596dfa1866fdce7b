//! Quick self-checks behind `mmbo verify`: exact derivatives against finite
//! differences, estimator fixed points, contraction of the Hessian momentum,
//! metrics against brute force, and the threshold solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::auc::{
    auc_minmax_loss, lambda_grad, metric_auc, metric_pauc, solve_lambda, LambdaConfig, SeparableSpec, TaskParams,
};
use crate::error::Result;
use crate::hypergrad::{exact_grad, fd_grad, relative_error};
use crate::linalg::{Matrix, Vector};
use crate::optimizer::{estimate_v1, estimate_v2, hessian_momentum_update, OptimizerState, RunConfig, Variant};
use crate::problem::{ProblemDims, SmoothnessProfile, SyntheticQuadraticProblem};
use crate::sampling::{BlockBatch, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn dims() -> ProblemDims {
    ProblemDims {
        m: 8,
        d_x: 10,
        d_y: 5,
        d_alpha: 1,
    }
}

fn noiseless(seed: u64) -> Result<SyntheticQuadraticProblem> {
    let profile = SmoothnessProfile {
        sigma: 0.0,
        ..Default::default()
    };
    SyntheticQuadraticProblem::generate(seed, dims(), profile)
}

fn gaussian_point(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn hypergradient_fd() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let p = SyntheticQuadraticProblem::generate(seed, dims(), SmoothnessProfile::default())?;
        let x = gaussian_point(&mut ChaCha8Rng::seed_from_u64(100 + seed), 10);
        worst = worst.max(relative_error(&exact_grad(&p, &x)?, &fd_grad(&p, &x, 1e-5)));
    }
    Ok((worst <= 1e-5, format!("worst relative error {worst:.2e}")))
}

fn estimator_fixed_point() -> Result<(bool, String)> {
    let p = noiseless(7)?;
    let x = gaussian_point(&mut ChaCha8Rng::seed_from_u64(8), 10);
    let g = exact_grad(&p, &x)?;
    let cfg = RunConfig {
        block_batch: 8,
        data_batch: 1,
        ..Default::default()
    };
    let blocks = BlockBatch::full(8);
    let root = RngStream::root(0);
    let e1 = estimate_v1(&p, &OptimizerState::at_fixed_point(&p, &x, Variant::V1)?, &blocks, &root, &cfg)?;
    let e2 = estimate_v2(&p, &OptimizerState::at_fixed_point(&p, &x, Variant::V2)?, &blocks, &root, &cfg)?;
    let err = (&e1 - &g).amax().max((&e2 - &g).amax());
    Ok((err <= 1e-10, format!("max deviation {err:.2e}")))
}

fn momentum_contraction() -> Result<(bool, String)> {
    let p = noiseless(3)?;
    let a = p.block(0).a.clone();
    let mut s = &a * 3.0 + Matrix::identity(5, 5);
    let e0 = (&s - &a).norm();
    let mut worst: f64 = 0.0;
    for t in 1..=30 {
        s = hessian_momentum_update(&s, &a, 0.5, true)?.0;
        let expected = e0 * 0.5f64.powi(t);
        worst = worst.max(((&s - &a).norm() - expected).abs());
    }
    Ok((worst <= 1e-10, format!("max deviation from 0.5^t {worst:.2e}")))
}

fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] > 0.0 && labels[j] < 0.0 {
                pairs += 1.0;
                total += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    total / pairs
}

fn metrics_brute_force() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..40);
        let mut labels: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { -1.0 }).collect();
        labels[0] = 1.0;
        labels[1] = -1.0;
        // Coarse grid so ties occur.
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 4.0).collect();
        let auc = metric_auc(&scores, &labels)?;
        if auc != brute_auc(&scores, &labels) || metric_pauc(&scores, &labels, 1.0)? != auc {
            mismatches += 1;
        }
    }
    let worked = metric_auc(&[0.9, 0.8, 0.4, 0.3], &[1.0, -1.0, 1.0, -1.0])? == 0.75
        && metric_pauc(&[0.9, 0.8, 0.4, 0.3], &[1.0, -1.0, 1.0, -1.0], 0.5)? == 0.5;
    Ok((mismatches == 0 && worked, format!("{mismatches} mismatches, worked example {}", if worked { "ok" } else { "wrong" })))
}

fn threshold_solver() -> Result<(bool, String)> {
    let scores = [3.0, 2.0, 1.0];
    let cfg = LambdaConfig {
        k: 1,
        n_minus: 3,
        tau1: 1e-3,
        tau2: 1e-6,
        epsilon: 0.01,
    };
    let exact = solve_lambda(&scores, &cfg)?;
    let mut lam = 0.0;
    for _ in 0..20_000 {
        lam -= 0.004 * lambda_grad(lam, &scores, &cfg);
    }
    let ok = (lam - exact).abs() <= 1e-4 && (exact - 2.0).abs() <= 0.01;
    Ok((ok, format!("bisection {exact:.6}, sgd {lam:.6}")))
}

fn surrogate_fd() -> Result<(bool, String)> {
    let data = SeparableSpec {
        tasks: 1,
        samples_per_task: 20,
        positive_fraction: 0.3,
        dim: 3,
        margin: 0.2,
        seed: 1,
    }
    .generate()?;
    let task = data.task(0);
    let batch = task.full_batch();
    let rows = batch.all();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let hidden = 4;
    let flat = Vector::from_fn(3 * hidden + hidden, |_, _| rng.random_range(-0.7..0.7));
    let vars = crate::auc::AucVars {
        a: 0.3,
        b: -0.2,
        alpha: 0.4,
    };
    let at = |w: &Vector| TaskParams::from_flat(3, hidden, w);
    let loss = auc_minmax_loss(&at(&flat)?, vars, 1.0, task, 0, &batch)?;
    let ce = at(&flat)?.ce_loss_grad(task, &rows);
    let h = 1e-6;
    let mut fd_loss = Vector::zeros(flat.len());
    let mut fd_ce = Vector::zeros(flat.len());
    for j in 0..flat.len() {
        let (mut p, mut m) = (flat.clone(), flat.clone());
        p[j] += h;
        m[j] -= h;
        let (tp, tm) = (at(&p)?, at(&m)?);
        fd_loss[j] = (auc_minmax_loss(&tp, vars, 1.0, task, 0, &batch)?.value
            - auc_minmax_loss(&tm, vars, 1.0, task, 0, &batch)?.value)
            / (2.0 * h);
        fd_ce[j] = (tp.ce_loss(task, &rows) - tm.ce_loss(task, &rows)) / (2.0 * h);
    }
    let err = relative_error(&loss.grad_params, &fd_loss).max(relative_error(&ce, &fd_ce));
    Ok((err <= 1e-5, format!("worst relative error {err:.2e}")))
}

/// Runs every check; all of them finish in well under a second in release builds.
pub fn run_checks() -> Vec<Check> {
    vec![
        check("hypergradient_vs_finite_differences", hypergradient_fd),
        check("estimators_exact_at_fixed_point", estimator_fixed_point),
        check("hessian_momentum_contraction", momentum_contraction),
        check("metrics_vs_brute_force", metrics_brute_force),
        check("threshold_sgd_vs_bisection", threshold_solver),
        check("surrogate_gradients_vs_finite_differences", surrogate_fd),
    ]
}
