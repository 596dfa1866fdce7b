//! Shared tanh encoder with one linear head per task:
//! `h(x; k) = v_kᵀ tanh(W x)`.
//!
//! Flat layouts: a [`Scorer`] is `[W row-major (e·d), heads row-major (m·e)]`;
//! the parameters seen by a single task ([`TaskParams`]) are
//! `[W row-major (e·d), v_k (e)]`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::sampling::RngStream;

use super::data::Task;

#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    pub encoder: Matrix,
    /// Row `k` is the head of task `k`.
    pub heads: Matrix,
}

impl Scorer {
    pub fn new(encoder: Matrix, heads: Matrix) -> Result<Self> {
        if encoder.nrows() != heads.ncols() || encoder.nrows() == 0 || encoder.ncols() == 0 || heads.nrows() == 0 {
            return Err(Error::config("encoder rows must match head width and be nonzero"));
        }
        Ok(Scorer { encoder, heads })
    }

    /// Gaussian initialisation with standard deviation `scale/√d` for the
    /// encoder and `scale/√e` for the heads.
    pub fn init(seed: u64, tasks: usize, dim: usize, hidden: usize, scale: f64) -> Result<Self> {
        if tasks == 0 || dim == 0 || hidden == 0 {
            return Err(Error::config("scorer shape must be nonzero"));
        }
        let mut rng = RngStream::root(seed).labelled(u64::MAX, u64::MAX, 21).rng();
        let sw = scale / (dim as f64).sqrt();
        let sv = scale / (hidden as f64).sqrt();
        let encoder = Matrix::from_fn(hidden, dim, |_, _| sw * rng.sample::<f64, _>(StandardNormal));
        let heads = Matrix::from_fn(tasks, hidden, |_, _| sv * rng.sample::<f64, _>(StandardNormal));
        Scorer::new(encoder, heads)
    }

    pub fn tasks(&self) -> usize {
        self.heads.nrows()
    }

    pub fn dim(&self) -> usize {
        self.encoder.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.len() + self.heads.len()
    }

    pub fn task_params(&self, k: usize) -> TaskParams {
        TaskParams {
            w: self.encoder.clone(),
            v: self.heads.row(k).transpose(),
        }
    }

    pub fn score(&self, x: &Vector, k: usize) -> f64 {
        let a = (&self.encoder * x).map(f64::tanh);
        self.heads.row(k).transpose().dot(&a)
    }

    /// Scores of every sample of `task` under head `k`.
    pub fn task_scores(&self, task: &Task, k: usize) -> Vec<f64> {
        self.task_params(k).scores(task, &(0..task.len()).collect::<Vec<_>>())
    }

    pub fn to_flat(&self) -> Vector {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(self.encoder.transpose().iter());
        out.extend(self.heads.transpose().iter());
        Vector::from_vec(out)
    }

    pub fn from_flat(tasks: usize, dim: usize, hidden: usize, flat: &[f64]) -> Result<Self> {
        let nw = hidden * dim;
        if flat.len() != nw + tasks * hidden {
            return Err(Error::Contract(format!(
                "flat scorer has {} entries, expected {}",
                flat.len(),
                nw + tasks * hidden
            )));
        }
        let encoder = Matrix::from_row_slice(hidden, dim, &flat[..nw]);
        let heads = Matrix::from_row_slice(tasks, hidden, &flat[nw..]);
        Scorer::new(encoder, heads)
    }

    /// Adds a flat task-parameter vector of task `k` into a flat scorer vector.
    pub fn scatter_task(&self, k: usize, task_flat: &Vector, out: &mut Vector) {
        let nw = self.encoder.len();
        let e = self.hidden();
        out.rows_mut(0, nw).axpy(1.0, &task_flat.rows(0, nw), 1.0);
        out.rows_mut(nw + k * e, e).axpy(1.0, &task_flat.rows(nw, e), 1.0);
    }

    /// Task-`k` slice of a flat scorer vector.
    pub fn gather_task(&self, k: usize, flat: &Vector) -> Vector {
        let nw = self.encoder.len();
        let e = self.hidden();
        let mut out = Vector::zeros(nw + e);
        out.rows_mut(0, nw).copy_from(&flat.rows(0, nw));
        out.rows_mut(nw, e).copy_from(&flat.rows(nw + k * e, e));
        out
    }
}

/// Encoder plus one head: the parameters a single task's loss depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskParams {
    pub w: Matrix,
    pub v: Vector,
}

impl TaskParams {
    pub fn len(&self) -> usize {
        self.w.len() + self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vector {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.w.transpose().iter());
        out.extend(self.v.iter());
        Vector::from_vec(out)
    }

    pub fn from_flat(dim: usize, hidden: usize, flat: &Vector) -> Result<Self> {
        let nw = hidden * dim;
        if flat.len() != nw + hidden {
            return Err(Error::Contract(format!(
                "flat task parameters have {} entries, expected {}",
                flat.len(),
                nw + hidden
            )));
        }
        Ok(TaskParams {
            w: Matrix::from_row_slice(hidden, dim, &flat.as_slice()[..nw]),
            v: Vector::from_column_slice(&flat.as_slice()[nw..]),
        })
    }

    fn hidden(&self, x: &Vector) -> Vector {
        (&self.w * x).map(f64::tanh)
    }

    pub fn score(&self, x: &Vector) -> f64 {
        self.v.dot(&self.hidden(x))
    }

    pub fn scores(&self, task: &Task, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.score(&task.row(i))).collect()
    }

    /// `Σ_j c_j ∇h(x_{rows_j})` as a flat vector.
    pub fn backprop(&self, task: &Task, rows: &[usize], coeffs: &[f64]) -> Vector {
        debug_assert_eq!(rows.len(), coeffs.len());
        let mut gw = Matrix::zeros(self.w.nrows(), self.w.ncols());
        let mut gv = Vector::zeros(self.v.len());
        for (&i, &c) in rows.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let x = task.row(i);
            let a = self.hidden(&x);
            gv.axpy(c, &a, 1.0);
            let back = self.v.component_mul(&a.map(|t| 1.0 - t * t));
            gw.ger(c, &back, &x, 1.0);
        }
        TaskParams { w: gw, v: gv }.to_flat()
    }

    /// Mean logistic loss `(1/n) Σ log(1 + exp(−y h))` over `rows`.
    pub fn ce_loss(&self, task: &Task, rows: &[usize]) -> f64 {
        let n = rows.len() as f64;
        rows.iter()
            .map(|&i| softplus(-task.labels()[i] * self.score(&task.row(i))))
            .sum::<f64>()
            / n
    }

    /// Gradient of [`TaskParams::ce_loss`].
    pub fn ce_loss_grad(&self, task: &Task, rows: &[usize]) -> Vector {
        let n = rows.len() as f64;
        let coeffs: Vec<f64> = rows
            .iter()
            .map(|&i| {
                let y = task.labels()[i];
                -y * sigmoid(-y * self.score(&task.row(i))) / n
            })
            .collect();
        self.backprop(task, rows, &coeffs)
    }

    /// Hessian of [`TaskParams::ce_loss`] applied to a flat direction.
    pub fn ce_hvp(&self, task: &Task, rows: &[usize], direction: &Vector) -> Result<Vector> {
        let d = TaskParams::from_flat(self.w.ncols(), self.w.nrows(), direction)?;
        let n = rows.len() as f64;
        let mut gw = Matrix::zeros(self.w.nrows(), self.w.ncols());
        let mut gv = Vector::zeros(self.v.len());
        for &i in rows {
            let x = task.row(i);
            let y = task.labels()[i];
            let a = self.hidden(&x);
            let da = a.map(|t| 1.0 - t * t);
            let h = self.v.dot(&a);
            let l1 = -y * sigmoid(-y * h);
            let l2 = sigmoid(h) * sigmoid(-h);
            let r_a = da.component_mul(&(&d.w * &x));
            let r_h = d.v.dot(&a) + self.v.dot(&r_a);
            let r_l1 = l2 * r_h;
            gv += (&a * r_l1 + &r_a * l1) / n;
            let back = self.v.component_mul(&da) * r_l1 + d.v.component_mul(&da) * l1
                - self.v.component_mul(&a).component_mul(&r_a) * (2.0 * l1);
            gw.ger(1.0 / n, &back, &x, 1.0);
        }
        Ok(TaskParams { w: gw, v: gv }.to_flat())
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(s))` without overflow.
pub fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}
