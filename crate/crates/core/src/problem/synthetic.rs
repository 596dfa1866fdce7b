//! Analytic quadratic instances with closed-form lower and dual solutions.
//!
//! Block `i` is
//!
//! ```text
//! g_i(x, y)    = ½ yᵀ A_i y − yᵀ (B_i x + c_i)
//! f_i(x, α, y) = α (p_iᵀ x + q_iᵀ y + r_i) − (μ_f / 2) α² + ½ xᵀ M_i x + s_iᵀ y
//! ```
//!
//! with `A_i` SPD, spectrum in `[μ_g, L_g]`, and `α ∈ ℝ`. Each `M_i` is a
//! random symmetric (typically indefinite) matrix.

use std::path::Path;

use nalgebra::{Cholesky, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    AnalyticProblem, BilevelProblem, DualSet, OracleKind, OracleQuery, OracleValue, ProblemDims,
    SmoothnessProfile,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Nominal number of samples per block; only the batch size affects the noise.
pub const DEFAULT_POPULATION: usize = 1000;

/// Coefficients of one block.
#[derive(Debug, Clone)]
pub struct SyntheticBlock {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Vector,
    pub p: Vector,
    pub q: Vector,
    pub r: f64,
    pub m: Matrix,
    pub s: Vector,
    chol: Cholesky<f64, Dyn>,
}

impl SyntheticBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Matrix,
        b: Matrix,
        c: Vector,
        p: Vector,
        q: Vector,
        r: f64,
        m: Matrix,
        s: Vector,
    ) -> Result<Self> {
        let chol = linalg::cholesky(&a)?;
        Ok(SyntheticBlock {
            a,
            b,
            c,
            p,
            q,
            r,
            m,
            s,
            chol,
        })
    }

    fn check_shapes(&self, dims: &ProblemDims) -> Result<()> {
        let (dx, dy) = (dims.d_x, dims.d_y);
        let ok = self.a.shape() == (dy, dy)
            && self.b.shape() == (dy, dx)
            && self.c.len() == dy
            && self.p.len() == dx
            && self.q.len() == dy
            && self.m.shape() == (dx, dx)
            && self.s.len() == dy;
        if !ok {
            return Err(Error::config(format!(
                "block coefficients do not match dimensions {dims:?}"
            )));
        }
        if (&self.a - self.a.transpose()).amax() > 1e-12 || (&self.m - self.m.transpose()).amax() > 1e-12
        {
            return Err(Error::config("A_i and M_i must be symmetric"));
        }
        Ok(())
    }

    /// `A_i⁻¹ v` through the cached factorization.
    pub fn solve_a(&self, v: &Vector) -> Vector {
        self.chol.solve(v)
    }

    fn margin(&self, x: &Vector, y: &Vector) -> f64 {
        self.p.dot(x) + self.q.dot(y) + self.r
    }
}

/// An analytic multi-block min-max bilevel instance.
#[derive(Debug, Clone)]
pub struct SyntheticQuadraticProblem {
    dims: ProblemDims,
    profile: SmoothnessProfile,
    blocks: Vec<SyntheticBlock>,
    population: usize,
}

fn gaussian_vector(rng: &mut impl Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn gaussian_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian matrix.
fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
    let qr = gaussian_matrix(rng, n, n).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl SyntheticQuadraticProblem {
    /// Default lower bound imposed on the spectrum of `∇²F`.
    pub const DEFAULT_CURVATURE_FLOOR: f64 = 1.0;

    /// Random instance with `∇²F ⪰ DEFAULT_CURVATURE_FLOOR · I`.
    pub fn generate(seed: u64, dims: ProblemDims, profile: SmoothnessProfile) -> Result<Self> {
        Self::generate_with_floor(seed, dims, profile, Some(Self::DEFAULT_CURVATURE_FLOOR))
    }

    /// Random instance. `A_i = Q Λ Qᵀ` with `Λ ~ U[μ_g, L_g]` and `Q` Haar
    /// orthogonal; the other coefficients are standard normal, `M_i` being the
    /// symmetric part of a Gaussian matrix.
    ///
    /// `F` is itself a quadratic in `x`. With `curvature_floor = Some(κ)`,
    /// every `M_i` is shifted by the same multiple of the identity so that
    /// `λ_min(∇²F) ≥ κ`, which keeps `F` bounded below while the individual
    /// `f_i` stay nonconvex in `x`. `None` keeps the raw draw.
    pub fn generate_with_floor(
        seed: u64,
        dims: ProblemDims,
        profile: SmoothnessProfile,
        curvature_floor: Option<f64>,
    ) -> Result<Self> {
        dims.validate()?;
        profile.validate()?;
        if dims.d_alpha != 1 {
            return Err(Error::config("synthetic problems have a scalar dual (d_alpha = 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dx, dy) = (dims.d_x, dims.d_y);
        let mut blocks = Vec::with_capacity(dims.m);
        for _ in 0..dims.m {
            let q_orth = random_orthogonal(&mut rng, dy);
            let lambda = Vector::from_fn(dy, |_, _| rng.random_range(profile.mu_g..=profile.l_g));
            let a = linalg::symmetrize(&(&q_orth * Matrix::from_diagonal(&lambda) * q_orth.transpose()));
            let b = gaussian_matrix(&mut rng, dy, dx);
            let c = gaussian_vector(&mut rng, dy);
            let p = gaussian_vector(&mut rng, dx);
            let q = gaussian_vector(&mut rng, dy);
            let r: f64 = rng.sample(StandardNormal);
            let m = linalg::symmetrize(&gaussian_matrix(&mut rng, dx, dx));
            let s = gaussian_vector(&mut rng, dy);
            blocks.push(SyntheticBlock::new(a, b, c, p, q, r, m, s)?);
        }
        let mut problem = SyntheticQuadraticProblem {
            dims,
            profile,
            blocks,
            population: DEFAULT_POPULATION,
        };
        if let Some(floor) = curvature_floor {
            let lowest = linalg::min_eigenvalue(&problem.objective_hessian());
            if lowest < floor {
                let shift = floor - lowest;
                for blk in &mut problem.blocks {
                    for k in 0..dx {
                        blk.m[(k, k)] += shift;
                    }
                }
            }
        }
        Ok(problem)
    }

    /// Instance from explicit coefficients.
    pub fn from_blocks(
        dims: ProblemDims,
        profile: SmoothnessProfile,
        blocks: Vec<SyntheticBlock>,
    ) -> Result<Self> {
        dims.validate()?;
        profile.validate()?;
        if dims.d_alpha != 1 {
            return Err(Error::config("synthetic problems have a scalar dual (d_alpha = 1)"));
        }
        if blocks.len() != dims.m {
            return Err(Error::config(format!(
                "expected {} blocks, got {}",
                dims.m,
                blocks.len()
            )));
        }
        for blk in &blocks {
            blk.check_shapes(&dims)?;
        }
        Ok(SyntheticQuadraticProblem {
            dims,
            profile,
            blocks,
            population: DEFAULT_POPULATION,
        })
    }

    pub fn with_population(mut self, population: usize) -> Result<Self> {
        if population == 0 {
            return Err(Error::config("population must be positive"));
        }
        self.population = population;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        self.profile.sigma = sigma;
        self.profile.validate()?;
        Ok(self)
    }

    pub fn blocks(&self) -> &[SyntheticBlock] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &SyntheticBlock {
        &self.blocks[i]
    }

    /// The same problem with block `k` of the result equal to block `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.dims.m];
        if perm.len() != self.dims.m {
            return Err(Error::config("permutation length must equal m"));
        }
        for &p in perm {
            if p >= self.dims.m || seen[p] {
                return Err(Error::config("not a permutation"));
            }
            seen[p] = true;
        }
        Ok(SyntheticQuadraticProblem {
            dims: self.dims,
            profile: self.profile,
            blocks: perm.iter().map(|&p| self.blocks[p].clone()).collect(),
            population: self.population,
        })
    }

    /// `∇²F`, constant because `F` is quadratic.
    pub fn objective_hessian(&self) -> Matrix {
        let dx = self.dims.d_x;
        let mut h = Matrix::zeros(dx, dx);
        for blk in &self.blocks {
            let g = &blk.p + blk.b.transpose() * blk.solve_a(&blk.q);
            h += &g * g.transpose() / self.profile.mu_f + &blk.m;
        }
        h / self.dims.m as f64
    }

    fn exact_value(&self, i: usize, x: &Vector, alpha: &Vector, y: &Vector, kind: OracleKind) -> OracleValue {
        let blk = &self.blocks[i];
        let a = alpha[0];
        match kind {
            OracleKind::GradXF => OracleValue::Vector(&blk.p * a + &blk.m * x),
            OracleKind::GradAlphaF => {
                OracleValue::Vector(Vector::from_element(1, blk.margin(x, y) - self.profile.mu_f * a))
            }
            OracleKind::GradYF => OracleValue::Vector(&blk.q * a + &blk.s),
            OracleKind::GradYG => OracleValue::Vector(&blk.a * y - &blk.b * x - &blk.c),
            OracleKind::HessYYG => OracleValue::Matrix(blk.a.clone()),
            OracleKind::JacXYG => OracleValue::Matrix(-blk.b.transpose()),
        }
    }

    /// Writes the coefficients as JSON: a `dims`/`profile` header followed by
    /// per-block nested row-major arrays.
    pub fn to_json(&self) -> String {
        let file = ProblemFile {
            dims: self.dims,
            profile: self.profile,
            population: self.population,
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockFile {
                    a: linalg::matrix_to_rows(&b.a),
                    b: linalg::matrix_to_rows(&b.b),
                    c: b.c.iter().cloned().collect(),
                    p: b.p.iter().cloned().collect(),
                    q: b.q.iter().cloned().collect(),
                    r: b.r,
                    m: linalg::matrix_to_rows(&b.m),
                    s: b.s.iter().cloned().collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("problem serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<problem>".into(),
            message: e.to_string(),
        })?;
        let dims = file.dims;
        dims.validate()?;
        let (dx, dy) = (dims.d_x, dims.d_y);
        let vec = |v: &[f64], n: usize, name: &str| -> Result<Vector> {
            if v.len() != n {
                return Err(Error::config(format!("{name} must have length {n}")));
            }
            Ok(Vector::from_column_slice(v))
        };
        let blocks = file
            .blocks
            .iter()
            .map(|b| {
                SyntheticBlock::new(
                    linalg::matrix_from_rows(&b.a, dy, dy)?,
                    linalg::matrix_from_rows(&b.b, dy, dx)?,
                    vec(&b.c, dy, "c")?,
                    vec(&b.p, dx, "p")?,
                    vec(&b.q, dy, "q")?,
                    b.r,
                    linalg::matrix_from_rows(&b.m, dx, dx)?,
                    vec(&b.s, dy, "s")?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(dims, file.profile, blocks)?.with_population(file.population)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.as_ref().display().to_string(),
                message,
            },
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    dims: ProblemDims,
    profile: SmoothnessProfile,
    population: usize,
    blocks: Vec<BlockFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    r: f64,
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
    s: Vec<f64>,
}

impl BilevelProblem for SyntheticQuadraticProblem {
    fn dims(&self) -> ProblemDims {
        self.dims
    }

    fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }

    fn dual_set(&self) -> DualSet {
        DualSet::Full
    }

    fn population(&self, _block: usize) -> usize {
        self.population
    }

    fn oracle(
        &self,
        query: &OracleQuery<'_>,
        kind: OracleKind,
        rng: &mut dyn RngCore,
    ) -> Result<OracleValue> {
        query.validate(&self.dims)?;
        let exact = self.exact_value(query.block, query.x, query.alpha, query.y, kind);
        let sigma = self.profile.sigma;
        if sigma == 0.0 {
            return Ok(exact);
        }
        let scale = sigma / (query.batch.len() as f64).sqrt();
        Ok(match exact {
            OracleValue::Vector(v) => {
                OracleValue::Vector(v.map(|e| e + scale * rng.sample::<f64, _>(StandardNormal)))
            }
            OracleValue::Matrix(m) => {
                let noisy = m.map(|e| e + scale * rng.sample::<f64, _>(StandardNormal));
                if kind == OracleKind::HessYYG {
                    OracleValue::Matrix(linalg::clamp_eigenvalues_below(&noisy, self.profile.mu_g))
                } else {
                    OracleValue::Matrix(noisy)
                }
            }
        })
    }

    fn analytic(&self) -> Option<&dyn AnalyticProblem> {
        Some(self)
    }
}

impl AnalyticProblem for SyntheticQuadraticProblem {
    fn exact(&self, block: usize, x: &Vector, alpha: &Vector, y: &Vector, kind: OracleKind) -> OracleValue {
        self.exact_value(block, x, alpha, y, kind)
    }

    fn lower_solution(&self, block: usize, x: &Vector) -> Vector {
        let blk = &self.blocks[block];
        blk.solve_a(&(&blk.b * x + &blk.c))
    }

    fn dual_solution(&self, block: usize, x: &Vector) -> Vector {
        let y = self.lower_solution(block, x);
        Vector::from_element(1, self.blocks[block].margin(x, &y) / self.profile.mu_f)
    }

    fn upper_value(&self, block: usize, x: &Vector, alpha: &Vector, y: &Vector) -> f64 {
        let blk = &self.blocks[block];
        let a = alpha[0];
        a * blk.margin(x, y) - 0.5 * self.profile.mu_f * a * a
            + 0.5 * x.dot(&(&blk.m * x))
            + blk.s.dot(y)
    }

    fn lower_value(&self, block: usize, x: &Vector, y: &Vector) -> f64 {
        let blk = &self.blocks[block];
        0.5 * y.dot(&(&blk.a * y)) - y.dot(&(&blk.b * x + &blk.c))
    }
}
