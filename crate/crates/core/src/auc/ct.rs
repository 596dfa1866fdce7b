//! Multi-task AUC with a compositional lower level: each task tracks
//! `u_k ≈ w_k − η̃ ∇L_CE(w_k)`, where `w_k` is the encoder plus head `k`,
//! and the AUC surrogate is evaluated at `u_k`.
//!
//! The primal variable is `x = (w, a, b)` in the same layout as the pAUC
//! trainer: `[scorer flat, a_1..a_m, b_1..b_m]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::sampling::{sample_blocks, BlockBatch, Purpose, RngStream};

use super::data::{Task, TaskDataset};
use super::losses::{auc_minmax_loss, AucVars};
use super::metrics::metric_auc;
use super::scorer::{Scorer, TaskParams};

/// Trainer settings. Missing fields take the values of [`CtConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtConfig {
    /// Margin `c` of the square loss.
    pub margin: f64,
    pub eta0: f64,
    pub eta1: f64,
    /// Step of the lower-level tracker.
    pub eta2: f64,
    /// Cross-entropy step `η̃` inside the lower objective.
    pub eta_tilde: f64,
    pub beta0: f64,
    pub task_batch: usize,
    pub batch_pos: usize,
    pub batch_neg: usize,
    /// Use the exact cross-entropy Hessian in the cross derivative instead
    /// of treating `η̃ ∇²L_CE` as zero.
    pub exact_hvp: bool,
    pub iterations: u64,
    pub seed: u64,
}

impl Default for CtConfig {
    fn default() -> Self {
        CtConfig {
            margin: 1.0,
            eta0: 0.1,
            eta1: 0.1,
            eta2: 0.5,
            eta_tilde: 0.1,
            beta0: 0.5,
            task_batch: 2,
            batch_pos: 8,
            batch_neg: 32,
            exact_hvp: false,
            iterations: 2000,
            seed: 0,
        }
    }
}

impl CtConfig {

    pub fn validate(&self, tasks: usize) -> Result<()> {
        for (name, v) in [
            ("eta0", self.eta0),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta_tilde", self.eta_tilde),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        if !(self.beta0 > 0.0 && self.beta0 <= 1.0) {
            return Err(Error::config("beta0 must lie in (0, 1]"));
        }
        if self.task_batch == 0 || self.task_batch > tasks {
            return Err(Error::config(format!("task_batch must lie in 1..={tasks}")));
        }
        if self.batch_pos == 0 || self.batch_neg == 0 {
            return Err(Error::config("batch_pos and batch_neg must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtState {
    pub t: u64,
    pub scorer: Scorer,
    pub vars: Vec<AucVars>,
    /// Flat task parameters tracked by each lower problem.
    pub u: Vec<Vector>,
    pub z: Vector,
}

impl CtState {
    /// `a = b = α = 0`, `z = 0`, and `u_k` a copy of the task-`k` parameters.
    pub fn new(scorer: Scorer, data: &TaskDataset) -> Result<Self> {
        let m = data.num_tasks();
        if scorer.tasks() != m || scorer.dim() != data.dim() {
            return Err(Error::config("scorer shape does not match the dataset"));
        }
        let u = (0..m).map(|k| scorer.task_params(k).to_flat()).collect();
        let z = Vector::zeros(scorer.num_params() + 2 * m);
        Ok(CtState {
            t: 0,
            scorer,
            vars: vec![AucVars::default(); m],
            u,
            z,
        })
    }

    pub fn primal(&self) -> Vector {
        let n = self.scorer.num_params();
        let m = self.vars.len();
        let mut x = Vector::zeros(n + 2 * m);
        x.rows_mut(0, n).copy_from(&self.scorer.to_flat());
        for (k, v) in self.vars.iter().enumerate() {
            x[n + k] = v.a;
            x[n + m + k] = v.b;
        }
        x
    }

    fn set_primal(&mut self, x: &Vector) -> Result<()> {
        let n = self.scorer.num_params();
        let m = self.vars.len();
        self.scorer = Scorer::from_flat(m, self.scorer.dim(), self.scorer.hidden(), &x.as_slice()[..n])?;
        for (k, v) in self.vars.iter_mut().enumerate() {
            v.a = x[n + k];
            v.b = x[n + m + k];
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().chain(self.scorer.to_flat().iter()).all(|v| v.is_finite())
            && self.u.iter().all(|u| u.iter().all(|v| v.is_finite()))
            && self.vars.iter().all(|v| v.a.is_finite() && v.b.is_finite() && v.alpha.is_finite())
    }

    /// Task-averaged surrogate over the full data at the upper parameters.
    pub fn objective(&self, data: &TaskDataset, cfg: &CtConfig) -> Result<f64> {
        let mut total = 0.0;
        for (k, task) in data.tasks().iter().enumerate() {
            let loss = auc_minmax_loss(&self.scorer.task_params(k), self.vars[k], cfg.margin, task, k, &task.full_batch())?;
            total += loss.value;
        }
        Ok(total / data.num_tasks() as f64)
    }

    /// AUC of every task over its full data, scored with the upper
    /// parameters `w`.
    pub fn task_aucs(&self, data: &TaskDataset) -> Result<Vec<f64>> {
        data.tasks()
            .iter()
            .enumerate()
            .map(|(k, t)| metric_auc(&self.scorer.task_scores(t, k), t.labels()))
            .collect()
    }
}

/// One step on `½‖u − (w − η̃ ∇L_CE(w))‖²`, whose Hessian in `u` is the
/// identity: `u' = u − η₂ (u − (w − η̃ ∇L_CE(w)))`.
pub fn compositional_lower_step(
    w: &TaskParams,
    u: &Vector,
    task: &Task,
    rows: &[usize],
    eta2: f64,
    eta_tilde: f64,
) -> Vector {
    let target = w.to_flat() - w.ce_loss_grad(task, rows) * eta_tilde;
    u - (u - target) * eta2
}

#[derive(Debug, Clone)]
pub struct CtStep {
    pub state: CtState,
    pub delta: Vector,
    pub tasks: BlockBatch,
}

/// One iteration. For each sampled task the surrogate is evaluated at the
/// lower iterate `u_k`; its parameter gradient is mapped back to `w_k`
/// through `I − η̃ ∇²L_CE(w_k)`.
pub fn step_mauc_ct(state: &CtState, cfg: &CtConfig, data: &TaskDataset, root: &RngStream) -> Result<CtStep> {
    let m = data.num_tasks();
    cfg.validate(m)?;
    let t = state.t;
    let n = state.scorer.num_params();
    let (dim, hidden) = (state.scorer.dim(), state.scorer.hidden());
    let tasks = sample_blocks(&root.derive(t, 0, Purpose::BlockSelection), m, cfg.task_batch)?;
    let mut delta = Vector::zeros(n + 2 * m);
    let mut next = state.clone();
    for &k in tasks.indices() {
        let task = data.task(k);
        let batch = task.stratified_batch(&root.derive(t, k as u64, Purpose::DataBatch), cfg.batch_pos, cfg.batch_neg)?;
        let rows = batch.all();
        let w_k = state.scorer.task_params(k);
        let u_k = TaskParams::from_flat(dim, hidden, &state.u[k])?;
        let loss = auc_minmax_loss(&u_k, state.vars[k], cfg.margin, task, k, &batch)?;

        let mut g_w = loss.grad_params.clone();
        if cfg.exact_hvp && cfg.eta_tilde != 0.0 {
            g_w -= w_k.ce_hvp(task, &rows, &loss.grad_params)? * cfg.eta_tilde;
        }
        let mut scorer_part = delta.rows(0, n).into_owned();
        state.scorer.scatter_task(k, &g_w, &mut scorer_part);
        delta.rows_mut(0, n).copy_from(&scorer_part);
        delta[n + k] += loss.grad_a;
        delta[n + m + k] += loss.grad_b;

        next.vars[k].alpha = (state.vars[k].alpha + cfg.eta1 * loss.grad_alpha).max(0.0);
        next.u[k] = compositional_lower_step(&w_k, &state.u[k], task, &rows, cfg.eta2, cfg.eta_tilde);
    }
    delta /= tasks.len() as f64;
    next.z = &state.z * (1.0 - cfg.beta0) + &delta * cfg.beta0;
    let x = state.primal() - &next.z * cfg.eta0;
    next.set_primal(&x)?;
    next.t += 1;
    Ok(CtStep {
        state: next,
        delta,
        tasks,
    })
}

/// Runs `iterations` steps, calling `on_step` after each. Stops with a
/// numerical error on the first non-finite state.
pub fn train_mauc_ct(
    mut state: CtState,
    cfg: &CtConfig,
    data: &TaskDataset,
    iterations: u64,
    on_step: &mut dyn FnMut(&CtState) -> Result<()>,
) -> Result<CtState> {
    let root = RngStream::root(cfg.seed);
    for _ in 0..iterations {
        state = step_mauc_ct(&state, cfg, data, &root)?.state;
        if !state.is_finite() {
            return Err(Error::Numerical(format!("non-finite state after iteration {}", state.t - 1)));
        }
        on_step(&state)?;
    }
    Ok(state)
}
