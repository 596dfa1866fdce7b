//! The multi-block min-max bilevel problem interface.
//!
//! A problem has `m` blocks. Block `i` owns an upper objective
//! `f_i(x, α_i, y_i)`, strongly concave in `α_i`, and a lower objective
//! `g_i(x, y_i)`, strongly convex in `y_i`. Solvers only see the problem
//! through stochastic derivative oracles; problems with closed-form lower and
//! dual solutions additionally implement [`AnalyticProblem`] so that exact
//! diagnostics can be computed.

mod synthetic;

pub use synthetic::{SyntheticBlock, SyntheticQuadraticProblem, DEFAULT_POPULATION};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDims {
    pub m: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub d_alpha: usize,
}

impl ProblemDims {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d_x == 0 || self.d_y == 0 || self.d_alpha == 0 {
            return Err(Error::config(format!(
                "all problem dimensions must be at least 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Regularity constants of the problem class and the oracle noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothnessProfile {
    /// Strong concavity of `f_i` in `α_i`.
    pub mu_f: f64,
    /// Strong convexity of `g_i` in `y_i`.
    pub mu_g: f64,
    #[serde(rename = "L_f")]
    pub l_f: f64,
    #[serde(rename = "L_g")]
    pub l_g: f64,
    /// Lipschitz bound of `f_i`; sets the radius `Γ = C_f / μ_g` used by v2.
    #[serde(rename = "C_f")]
    pub c_f: f64,
    #[serde(rename = "C_gxy")]
    pub c_gxy: f64,
    /// Oracle noise scale; per-coordinate variance is `σ² / |batch|`.
    pub sigma: f64,
}

impl Default for SmoothnessProfile {
    fn default() -> Self {
        SmoothnessProfile {
            mu_f: 1.0,
            mu_g: 1.0,
            l_f: 4.0,
            l_g: 4.0,
            c_f: 50.0,
            c_gxy: 10.0,
            sigma: 0.1,
        }
    }
}

impl SmoothnessProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu_f", self.mu_f),
            ("mu_g", self.mu_g),
            ("L_f", self.l_f),
            ("L_g", self.l_g),
            ("C_f", self.c_f),
            ("C_gxy", self.c_gxy),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if self.mu_f > self.l_f {
            return Err(Error::config("mu_f must not exceed L_f"));
        }
        if self.mu_g > self.l_g {
            return Err(Error::config("mu_g must not exceed L_g"));
        }
        Ok(())
    }

    /// Radius of the ball the v2 iterates are projected onto.
    pub fn gamma_radius(&self) -> f64 {
        self.c_f / self.mu_g
    }
}

/// Convex feasible set `A` of each dual block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DualSet {
    Full,
    NonNegative,
    Box { lo: f64, hi: f64 },
}

impl DualSet {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DualSet::Box { lo, hi } if !(lo <= hi) => Err(Error::config(format!(
                "empty dual box [{lo}, {hi}]"
            ))),
            _ => Ok(()),
        }
    }
}

/// The derivative an oracle call returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleKind {
    /// `∇_x f_i`, length `d_x`.
    GradXF,
    /// `∇_α f_i`, length `d_alpha`.
    GradAlphaF,
    /// `∇_y f_i`, length `d_y`.
    GradYF,
    /// `∇_y g_i`, length `d_y`.
    GradYG,
    /// `∇²_yy g_i`, `d_y × d_y`, symmetric with spectrum `≥ μ_g`.
    HessYYG,
    /// Mixed partial `∇²_xy g_i` with entry `(j, k) = ∂²g_i / ∂x_j ∂y_k`,
    /// shape `d_x × d_y`.
    JacXYG,
}

impl OracleKind {
    pub const ALL: [OracleKind; 6] = [
        OracleKind::GradXF,
        OracleKind::GradAlphaF,
        OracleKind::GradYF,
        OracleKind::GradYG,
        OracleKind::HessYYG,
        OracleKind::JacXYG,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleValue {
    Vector(Vector),
    Matrix(Matrix),
}

impl OracleValue {
    pub fn into_vector(self) -> Result<Vector> {
        match self {
            OracleValue::Vector(v) => Ok(v),
            OracleValue::Matrix(_) => Err(Error::Contract("expected a vector oracle".into())),
        }
    }

    pub fn into_matrix(self) -> Result<Matrix> {
        match self {
            OracleValue::Matrix(m) => Ok(m),
            OracleValue::Vector(_) => Err(Error::Contract("expected a matrix oracle".into())),
        }
    }
}

/// Point and minibatch at which a block's oracle is queried.
#[derive(Debug, Clone, Copy)]
pub struct OracleQuery<'a> {
    pub block: usize,
    pub x: &'a Vector,
    pub alpha: &'a Vector,
    pub y: &'a Vector,
    pub batch: &'a [usize],
}

impl OracleQuery<'_> {
    pub fn validate(&self, dims: &ProblemDims) -> Result<()> {
        if self.block >= dims.m {
            return Err(Error::Contract(format!(
                "block {} out of range 0..{}",
                self.block, dims.m
            )));
        }
        if self.batch.is_empty() {
            return Err(Error::Contract("oracle batch is empty".into()));
        }
        if self.x.len() != dims.d_x || self.y.len() != dims.d_y || self.alpha.len() != dims.d_alpha
        {
            return Err(Error::Contract(format!(
                "query point shapes (x {}, alpha {}, y {}) do not match {dims:?}",
                self.x.len(),
                self.alpha.len(),
                self.y.len()
            )));
        }
        Ok(())
    }
}

/// A multi-block min-max bilevel problem seen through stochastic oracles.
///
/// Implementations must be immutable after construction; all randomness comes
/// from the generator passed to [`BilevelProblem::oracle`].
pub trait BilevelProblem: Sync {
    fn dims(&self) -> ProblemDims;

    fn profile(&self) -> &SmoothnessProfile;

    fn dual_set(&self) -> DualSet;

    /// Number of data samples available to block `block`.
    fn population(&self, block: usize) -> usize;

    /// Unbiased stochastic estimate of `kind` at `query`.
    fn oracle(&self, query: &OracleQuery<'_>, kind: OracleKind, rng: &mut dyn RngCore)
        -> Result<OracleValue>;

    /// Closed-form access, when the problem has it.
    fn analytic(&self) -> Option<&dyn AnalyticProblem> {
        None
    }
}

/// Problems whose lower and dual solutions are available in closed form.
pub trait AnalyticProblem: BilevelProblem {
    /// Noiseless value of `kind` at a point.
    fn exact(
        &self,
        block: usize,
        x: &Vector,
        alpha: &Vector,
        y: &Vector,
        kind: OracleKind,
    ) -> OracleValue;

    /// `y_i(x) = argmin_y g_i(x, y)`.
    fn lower_solution(&self, block: usize, x: &Vector) -> Vector;

    /// `α_i(x) = argmax_{α ∈ A} f_i(x, α, y_i(x))`.
    fn dual_solution(&self, block: usize, x: &Vector) -> Vector;

    fn upper_value(&self, block: usize, x: &Vector, alpha: &Vector, y: &Vector) -> f64;

    fn lower_value(&self, block: usize, x: &Vector, y: &Vector) -> f64;
}

/// `F(x) = (1/m) Σ_i f_i(x, α_i(x), y_i(x))`.
pub fn exact_objective<P: AnalyticProblem + ?Sized>(problem: &P, x: &Vector) -> f64 {
    let m = problem.dims().m;
    let total: f64 = (0..m)
        .map(|i| {
            let y = problem.lower_solution(i, x);
            let alpha = problem.dual_solution(i, x);
            problem.upper_value(i, x, &alpha, &y)
        })
        .sum();
    total / m as f64
}
