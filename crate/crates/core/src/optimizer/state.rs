use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::problem::{AnalyticProblem, BilevelProblem, OracleKind};

use super::config::Variant;
use super::updates::project_dual;

/// Per-block curvature information, which is what distinguishes v1 from v2.
#[derive(Debug, Clone, PartialEq)]
pub enum CurvatureState {
    /// v1: momentum average `s_i` of sampled lower Hessians and the cached
    /// inverse `H_i = s_i⁻¹` from the last time the block was selected.
    Momentum { s: Vec<Matrix>, h: Vec<Matrix> },
    /// v2: iterates `v_i ≈ [∇²_yy g_i]⁻¹ ∇_y f_i`.
    Iterate { v: Vec<Vector> },
}

/// Everything the single-loop algorithms carry between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Iterations completed so far; also addresses the RNG substreams.
    pub t: u64,
    pub x: Vector,
    pub z: Vector,
    pub alpha: Vec<Vector>,
    pub y: Vec<Vector>,
    pub curvature: CurvatureState,
}

impl OptimizerState {
    /// `x = 0, z = 0, α_i = Π_A(0), y_i = 0`, and `s_i = μ_g I` (v1) or `v_i = 0` (v2).
    pub fn initial<P: BilevelProblem + ?Sized>(problem: &P, variant: Variant) -> Result<Self> {
        let dims = problem.dims();
        dims.validate()?;
        let alpha0 = project_dual(&Vector::zeros(dims.d_alpha), &problem.dual_set())?;
        let mu_g = problem.profile().mu_g;
        let curvature = match variant {
            Variant::V1 => CurvatureState::Momentum {
                s: vec![Matrix::identity(dims.d_y, dims.d_y) * mu_g; dims.m],
                h: vec![Matrix::identity(dims.d_y, dims.d_y) / mu_g; dims.m],
            },
            Variant::V2 => CurvatureState::Iterate {
                v: vec![Vector::zeros(dims.d_y); dims.m],
            },
        };
        Ok(OptimizerState {
            t: 0,
            x: Vector::zeros(dims.d_x),
            z: Vector::zeros(dims.d_x),
            alpha: vec![alpha0; dims.m],
            y: vec![Vector::zeros(dims.d_y); dims.m],
            curvature,
        })
    }

    /// State whose block variables sit exactly at their targets for `x`:
    /// `α_i(x)`, `y_i(x)`, and `s_i = ∇²_yy g_i` or `v_i = [∇²_yy g_i]⁻¹ ∇_y f_i`.
    pub fn at_fixed_point(problem: &dyn AnalyticProblem, x: &Vector, variant: Variant) -> Result<Self> {
        let dims = problem.dims();
        let mut alpha = Vec::with_capacity(dims.m);
        let mut y = Vec::with_capacity(dims.m);
        let mut s = Vec::new();
        let mut h = Vec::new();
        let mut v = Vec::new();
        for i in 0..dims.m {
            let yi = problem.lower_solution(i, x);
            let ai = problem.dual_solution(i, x);
            let hess = problem.exact(i, x, &ai, &yi, OracleKind::HessYYG).into_matrix()?;
            match variant {
                Variant::V1 => {
                    h.push(linalg::spd_inverse(&hess)?);
                    s.push(hess);
                }
                Variant::V2 => {
                    let gyf = problem.exact(i, x, &ai, &yi, OracleKind::GradYF).into_vector()?;
                    v.push(linalg::spd_solve(&hess, &gyf)?);
                }
            }
            alpha.push(ai);
            y.push(yi);
        }
        let curvature = match variant {
            Variant::V1 => CurvatureState::Momentum { s, h },
            Variant::V2 => CurvatureState::Iterate { v },
        };
        Ok(OptimizerState {
            t: 0,
            x: x.clone(),
            z: Vector::zeros(dims.d_x),
            alpha,
            y,
            curvature,
        })
    }

    pub fn variant(&self) -> Variant {
        match self.curvature {
            CurvatureState::Momentum { .. } => Variant::V1,
            CurvatureState::Iterate { .. } => Variant::V2,
        }
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    /// Replaces `s_i` (and its cached inverse) for a v1 state.
    pub fn set_hessian_momentum(&mut self, block: usize, s_new: Matrix) -> Result<()> {
        match &mut self.curvature {
            CurvatureState::Momentum { s, h } => {
                h[block] = linalg::spd_inverse(&s_new)?;
                s[block] = s_new;
                Ok(())
            }
            CurvatureState::Iterate { .. } => Err(Error::Contract("not a v1 state".into())),
        }
    }

    pub fn check_shapes<P: BilevelProblem + ?Sized>(&self, problem: &P) -> Result<()> {
        let d = problem.dims();
        let ok = self.x.len() == d.d_x
            && self.z.len() == d.d_x
            && self.alpha.len() == d.m
            && self.y.len() == d.m
            && self.alpha.iter().all(|a| a.len() == d.d_alpha)
            && self.y.iter().all(|y| y.len() == d.d_y)
            && match &self.curvature {
                CurvatureState::Momentum { s, h } => {
                    s.len() == d.m
                        && h.len() == d.m
                        && s.iter().all(|m| m.shape() == (d.d_y, d.d_y))
                }
                CurvatureState::Iterate { v } => v.len() == d.m && v.iter().all(|v| v.len() == d.d_y),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("state shapes do not match {d:?}")))
        }
    }

    /// Smallest eigenvalue over all `s_i` (v1), `None` for v2.
    pub fn min_curvature_eigenvalue(&self) -> Option<f64> {
        match &self.curvature {
            CurvatureState::Momentum { s, .. } => {
                Some(s.iter().map(linalg::min_eigenvalue).fold(f64::INFINITY, f64::min))
            }
            CurvatureState::Iterate { .. } => None,
        }
    }

    /// Largest `‖v_i‖` (v2), `None` for v1.
    pub fn max_v_norm(&self) -> Option<f64> {
        match &self.curvature {
            CurvatureState::Iterate { v } => Some(v.iter().map(|v| v.norm()).fold(0.0, f64::max)),
            CurvatureState::Momentum { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite_vec(&self.x)
            && linalg::all_finite_vec(&self.z)
            && self.alpha.iter().all(linalg::all_finite_vec)
            && self.y.iter().all(linalg::all_finite_vec)
            && match &self.curvature {
                CurvatureState::Momentum { s, .. } => s.iter().all(linalg::all_finite_mat),
                CurvatureState::Iterate { v } => v.iter().all(linalg::all_finite_vec),
            }
    }
}
