//! Ground truth for analytic problems: exact hypergradient through the
//! implicit-function formula, finite-difference checks, and the tracked
//! errors of the running block variables.

use crate::error::Result;
use crate::linalg::{self, Matrix, Vector};
use crate::optimizer::{CurvatureState, OptimizerState};
use crate::problem::{exact_objective, AnalyticProblem, OracleKind};

/// `ε`-stationarity `‖∇F(x)‖ ≤ ε` and finite-difference agreement at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub grad_exact: Vector,
    pub grad_fd: Vector,
    pub rel_error: f64,
    /// `‖∇F(x)‖²`.
    pub stationarity: f64,
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Block `i` term of the hypergradient, `∇_x f_i − ∇²_xy g_i [∇²_yy g_i]⁻¹ ∇_y f_i`,
/// evaluated at `(x, α_i(x), y_i(x))`.
pub fn block_hypergradient<P: AnalyticProblem + ?Sized>(problem: &P, block: usize, x: &Vector) -> Result<Vector> {
    let y = problem.lower_solution(block, x);
    let alpha = problem.dual_solution(block, x);
    let gxf = problem.exact(block, x, &alpha, &y, OracleKind::GradXF).into_vector()?;
    let gyf = problem.exact(block, x, &alpha, &y, OracleKind::GradYF).into_vector()?;
    let hyy = problem.exact(block, x, &alpha, &y, OracleKind::HessYYG).into_matrix()?;
    let jac = problem.exact(block, x, &alpha, &y, OracleKind::JacXYG).into_matrix()?;
    Ok(gxf - jac * linalg::spd_solve(&hyy, &gyf)?)
}

/// `∇F(x) = (1/m) Σ_i [∇_x f_i − ∇²_xy g_i [∇²_yy g_i]⁻¹ ∇_y f_i]` at the lower
/// and dual solutions. No `∂α_i/∂x` term appears: `∂f_i/∂α` vanishes at `α_i(x)`.
pub fn exact_grad<P: AnalyticProblem + ?Sized>(problem: &P, x: &Vector) -> Result<Vector> {
    let m = problem.dims().m;
    let mut total = Vector::zeros(x.len());
    for i in 0..m {
        total += block_hypergradient(problem, i, x)?;
    }
    Ok(total / m as f64)
}

/// Central differences of [`exact_objective`] along each coordinate.
pub fn fd_grad<P: AnalyticProblem + ?Sized>(problem: &P, x: &Vector, h: f64) -> Vector {
    assert!(h > 0.0, "finite-difference step must be positive");
    Vector::from_fn(x.len(), |j, _| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        (exact_objective(problem, &plus) - exact_objective(problem, &minus)) / (2.0 * h)
    })
}

/// The `(∂α_i/∂x)ᵀ ∂f_i/∂α` contribution that the exact formula leaves out,
/// averaged over blocks, with `∂α_i/∂x` by central differences.
pub fn dual_chain_term<P: AnalyticProblem + ?Sized>(problem: &P, x: &Vector, h: f64) -> Result<Vector> {
    let dims = problem.dims();
    let mut total = Vector::zeros(x.len());
    for i in 0..dims.m {
        let y = problem.lower_solution(i, x);
        let alpha = problem.dual_solution(i, x);
        let galpha = problem.exact(i, x, &alpha, &y, OracleKind::GradAlphaF).into_vector()?;
        let jac = Matrix::from_fn(x.len(), dims.d_alpha, |j, k| {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[j] += h;
            minus[j] -= h;
            (problem.dual_solution(i, &plus)[k] - problem.dual_solution(i, &minus)[k]) / (2.0 * h)
        });
        total += jac * galpha;
    }
    Ok(total / dims.m as f64)
}

pub fn relative_error(exact: &Vector, approx: &Vector) -> f64 {
    (exact - approx).norm() / exact.norm().max(1e-30)
}

pub fn diagnose<P: AnalyticProblem + ?Sized>(problem: &P, x: &Vector, h: f64) -> Result<DiagnosticsReport> {
    let grad_exact = exact_grad(problem, x)?;
    let grad_fd = fd_grad(problem, x, h);
    Ok(DiagnosticsReport {
        rel_error: relative_error(&grad_exact, &grad_fd),
        stationarity: grad_exact.norm_squared(),
        grad_exact,
        grad_fd,
    })
}

/// Matrix norm used for the Hessian-momentum error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixNorm {
    #[default]
    Frobenius,
    Spectral,
}

/// Squared distances of the running block variables from their targets at
/// `state.x`, summed over all blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaErrors {
    /// `Σ_i ‖y_i − y_i(x)‖²`.
    pub delta_y: f64,
    /// `Σ_i ‖α_i − α_i(x)‖²`.
    pub delta_alpha: f64,
    /// v1: `Σ_i ‖s_i − ∇²_yy g_i(x, y_i(x))‖²`;
    /// v2: `Σ_i ‖v_i − [∇²_yy g_i]⁻¹ ∇_y f_i‖²` at `(x, α_i(x), y_i(x))`.
    pub delta_h_or_v: f64,
}

pub fn delta_errors<P: AnalyticProblem + ?Sized>(problem: &P, state: &OptimizerState) -> Result<DeltaErrors> {
    delta_errors_with_norm(problem, state, MatrixNorm::Frobenius)
}

pub fn delta_errors_with_norm<P: AnalyticProblem + ?Sized>(
    problem: &P,
    state: &OptimizerState,
    norm: MatrixNorm,
) -> Result<DeltaErrors> {
    let x = &state.x;
    let mut out = DeltaErrors {
        delta_y: 0.0,
        delta_alpha: 0.0,
        delta_h_or_v: 0.0,
    };
    for i in 0..problem.dims().m {
        let y_star = problem.lower_solution(i, x);
        let a_star = problem.dual_solution(i, x);
        out.delta_y += (&state.y[i] - &y_star).norm_squared();
        out.delta_alpha += (&state.alpha[i] - &a_star).norm_squared();
        let hess = problem.exact(i, x, &a_star, &y_star, OracleKind::HessYYG).into_matrix()?;
        out.delta_h_or_v += match &state.curvature {
            CurvatureState::Momentum { s, .. } => {
                let diff = &s[i] - &hess;
                match norm {
                    MatrixNorm::Frobenius => diff.norm_squared(),
                    MatrixNorm::Spectral => linalg::sym_spectral_norm(&diff).powi(2),
                }
            }
            CurvatureState::Iterate { v } => {
                let gyf = problem.exact(i, x, &a_star, &y_star, OracleKind::GradYF).into_vector()?;
                (&v[i] - linalg::spd_solve(&hess, &gyf)?).norm_squared()
            }
        };
    }
    Ok(out)
}
