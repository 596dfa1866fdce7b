//! Multi-task partial AUC through the smoothed top-K threshold `λ_k(w)`.
//!
//! The primal variable is `x = (w, a, b)` laid out as
//! `[scorer flat, a_1..a_m, b_1..b_m]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::sampling::{sample_blocks, BlockBatch, Purpose, RngStream};

use super::data::{StratifiedBatch, Task, TaskDataset};
use super::lambda::{lambda_grad, lambda_hess, solve_lambda, LambdaConfig};
use super::metrics::metric_pauc;
use super::scorer::{sigmoid, Scorer};

/// Trainer settings. Missing fields take the values of [`PaucConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaucConfig {
    /// False-positive-rate cap `ρ ∈ (0, 1]`.
    pub rho: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub epsilon: f64,
    /// Margin `c` of the pairwise square loss.
    pub margin: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub task_batch: usize,
    pub batch_pos: usize,
    pub batch_neg: usize,
    /// Drop the terms that carry the derivative of `λ_k(w)`.
    pub practical: bool,
    pub iterations: u64,
    pub seed: u64,
}

impl Default for PaucConfig {
    fn default() -> Self {
        PaucConfig {
            rho: 0.5,
            tau1: 0.05,
            tau2: 1e-3,
            epsilon: 0.01,
            margin: 1.0,
            eta0: 0.1,
            eta1: 0.1,
            eta2: 0.1,
            beta0: 0.5,
            beta1: 0.5,
            task_batch: 2,
            batch_pos: 8,
            batch_neg: 32,
            practical: false,
            iterations: 2000,
            seed: 0,
        }
    }
}

impl PaucConfig {

    pub fn validate(&self, tasks: usize) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::config("rho must lie in (0, 1]"));
        }
        if !(self.tau1 > 0.0 && self.tau2 > 0.0 && self.epsilon >= 0.0) {
            return Err(Error::config("tau1, tau2 must be positive and epsilon non-negative"));
        }
        for (name, v) in [("eta0", self.eta0), ("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        for (name, v) in [("beta0", self.beta0), ("beta1", self.beta1)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1]")));
            }
        }
        if self.task_batch == 0 || self.task_batch > tasks {
            return Err(Error::config(format!("task_batch must lie in 1..={tasks}")));
        }
        if self.batch_pos == 0 || self.batch_neg == 0 {
            return Err(Error::config("batch_pos and batch_neg must be at least 1"));
        }
        Ok(())
    }

    /// Threshold problem of one task, with `K = ⌊n₋ ρ⌋`.
    pub fn lambda_config(&self, task: &Task) -> Result<LambdaConfig> {
        let k = (task.n_minus() as f64 * self.rho).floor() as usize;
        let cfg = LambdaConfig {
            k,
            n_minus: task.n_minus(),
            tau1: self.tau1,
            tau2: self.tau2,
            epsilon: self.epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaucState {
    pub t: u64,
    pub scorer: Scorer,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Scalar Hessian momentum of each threshold problem.
    pub hess: Vec<f64>,
    pub z: Vector,
}

impl PaucState {
    /// `a = b = α = 0`, `z = 0`; `λ_k` is the exact threshold of the
    /// initial scorer and `H_k` its curvature there.
    pub fn new(scorer: Scorer, data: &TaskDataset, cfg: &PaucConfig) -> Result<Self> {
        let m = data.num_tasks();
        if scorer.tasks() != m || scorer.dim() != data.dim() {
            return Err(Error::config("scorer shape does not match the dataset"));
        }
        let mut lambda = Vec::with_capacity(m);
        let mut hess = Vec::with_capacity(m);
        for (k, task) in data.tasks().iter().enumerate() {
            let lcfg = cfg.lambda_config(task)?;
            let neg = scorer.task_params(k).scores(task, task.negatives());
            let l = solve_lambda(&neg, &lcfg)?;
            hess.push(lambda_hess(l, &neg, &lcfg));
            lambda.push(l);
        }
        let z = Vector::zeros(scorer.num_params() + 2 * m);
        Ok(PaucState {
            t: 0,
            scorer,
            a: vec![0.0; m],
            b: vec![0.0; m],
            alpha: vec![0.0; m],
            lambda,
            hess,
            z,
        })
    }

    pub fn primal(&self) -> Vector {
        let n = self.scorer.num_params();
        let m = self.a.len();
        let mut x = Vector::zeros(n + 2 * m);
        x.rows_mut(0, n).copy_from(&self.scorer.to_flat());
        for k in 0..m {
            x[n + k] = self.a[k];
            x[n + m + k] = self.b[k];
        }
        x
    }

    fn set_primal(&mut self, x: &Vector) -> Result<()> {
        let n = self.scorer.num_params();
        let m = self.a.len();
        self.scorer = Scorer::from_flat(m, self.scorer.dim(), self.scorer.hidden(), &x.as_slice()[..n])?;
        for k in 0..m {
            self.a[k] = x[n + k];
            self.b[k] = x[n + m + k];
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().all(|v| v.is_finite())
            && self.scorer.to_flat().iter().all(|v| v.is_finite())
            && [&self.a, &self.b, &self.alpha, &self.lambda, &self.hess]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Task-averaged surrogate over the full data, without the `−α²` term.
    pub fn objective(&self, data: &TaskDataset, cfg: &PaucConfig) -> Result<f64> {
        let mut total = 0.0;
        for (k, task) in data.tasks().iter().enumerate() {
            total += pauc_task_gradient(self, cfg, task, k, &task.full_batch())?.value;
        }
        Ok(total / data.num_tasks() as f64)
    }

    /// pAUC at `rho` of every task over its full data.
    pub fn task_paucs(&self, data: &TaskDataset, rho: f64) -> Result<Vec<f64>> {
        data.tasks()
            .iter()
            .enumerate()
            .map(|(k, t)| metric_pauc(&self.scorer.task_scores(t, k), t.labels(), rho))
            .collect()
    }
}

/// Per-task quantities held constant when differentiating the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenCoefficients {
    /// `φ(h_j − λ)` for every batch negative.
    pub phi: Vec<f64>,
    /// `φ(h_j − λ)(1 − φ(h_j − λ))`.
    pub dphi: Vec<f64>,
    /// `((h_j − b)² + 2α h_j) / (B₋ ρ)`.
    pub kappa: Vec<f64>,
    pub h_inv: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl FrozenCoefficients {
    fn at(h_neg: &[f64], b: f64, alpha: f64, lambda: f64, hess: f64, rho: f64) -> Self {
        let scale = 1.0 / (h_neg.len() as f64 * rho);
        let phi: Vec<f64> = h_neg.iter().map(|h| sigmoid(h - lambda)).collect();
        FrozenCoefficients {
            dphi: phi.iter().map(|p| p * (1.0 - p)).collect(),
            kappa: h_neg.iter().map(|h| ((h - b).powi(2) + 2.0 * alpha * h) * scale).collect(),
            phi,
            h_inv: 1.0 / hess,
            lambda,
            alpha,
        }
    }
}

/// One task's share of the surrogate, in score space.
#[derive(Debug, Clone, PartialEq)]
pub struct PaucTaskTerms {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
    pub d_a: f64,
    pub d_b: f64,
    /// `2·(batch pAUC margin) − 2α`.
    pub grad_alpha: f64,
}

/// Surrogate of one task with the stop-gradient parts taken from `frozen`.
/// Differentiating this function in `(h, a, b)` with `frozen` held fixed
/// gives the estimator used by the optimizer.
pub fn pauc_task_terms(
    h_pos: &[f64],
    h_neg: &[f64],
    a: f64,
    b: f64,
    frozen: &FrozenCoefficients,
    cfg: &PaucConfig,
) -> PaucTaskTerms {
    let bp = h_pos.len() as f64;
    let bn = h_neg.len() as f64;
    let neg_scale = 1.0 / (bn * cfg.rho);
    let alpha = frozen.alpha;
    let mean_pos = h_pos.iter().sum::<f64>() / bp;

    let q: Vec<f64> = h_neg.iter().map(|h| sigmoid((h - frozen.lambda) / cfg.tau1)).collect();
    let q_mean = q.iter().sum::<f64>() / bn;

    let mut value = h_pos.iter().map(|h| (h - a).powi(2)).sum::<f64>() / bp;
    let mut weighted = 0.0;
    let mut d_b = 0.0;
    for (j, &h) in h_neg.iter().enumerate() {
        value += neg_scale * frozen.phi[j] * (h - b).powi(2);
        weighted += neg_scale * frozen.phi[j] * h;
        d_b -= 2.0 * neg_scale * frozen.phi[j] * (h - b);
    }
    let margin = weighted - mean_pos + cfg.margin;
    value += 2.0 * alpha * margin;

    let d_pos = h_pos.iter().map(|h| (2.0 * (h - a) - 2.0 * alpha) / bp).collect();
    let mut d_neg: Vec<f64> = h_neg
        .iter()
        .zip(&frozen.phi)
        .map(|(h, p)| 2.0 * neg_scale * p * ((h - b) + alpha))
        .collect();

    if !cfg.practical {
        let ks: f64 = frozen.kappa.iter().zip(&frozen.dphi).map(|(k, s)| k * s).sum();
        for (j, &h) in h_neg.iter().enumerate() {
            value += frozen.kappa[j] * frozen.dphi[j] * (h - frozen.h_inv * q_mean);
            d_neg[j] += frozen.kappa[j] * frozen.dphi[j]
                - frozen.h_inv * ks * q[j] * (1.0 - q[j]) / (cfg.tau1 * bn);
        }
    }

    PaucTaskTerms {
        value,
        d_pos,
        d_neg,
        d_a: -2.0 * (mean_pos - a),
        d_b,
        grad_alpha: 2.0 * margin - 2.0 * alpha,
    }
}

/// Value and gradient of one task's surrogate at the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct PaucTaskGradient {
    pub value: f64,
    pub grad_params: Vector,
    pub grad_a: f64,
    pub grad_b: f64,
    pub grad_alpha: f64,
    pub frozen: FrozenCoefficients,
}

pub fn pauc_task_gradient(
    state: &PaucState,
    cfg: &PaucConfig,
    task: &Task,
    k: usize,
    batch: &StratifiedBatch,
) -> Result<PaucTaskGradient> {
    if batch.positives.is_empty() || batch.negatives.is_empty() {
        return Err(Error::SingleClassBatch { task: k });
    }
    if !(state.hess[k] > 0.0) {
        return Err(Error::Numerical(format!("threshold curvature of task {k} is not positive")));
    }
    let params = state.scorer.task_params(k);
    let h_pos = params.scores(task, &batch.positives);
    let h_neg = params.scores(task, &batch.negatives);
    let frozen = FrozenCoefficients::at(&h_neg, state.b[k], state.alpha[k], state.lambda[k], state.hess[k], cfg.rho);
    let terms = pauc_task_terms(&h_pos, &h_neg, state.a[k], state.b[k], &frozen, cfg);
    let coeffs: Vec<f64> = terms.d_pos.iter().chain(&terms.d_neg).copied().collect();
    Ok(PaucTaskGradient {
        value: terms.value,
        grad_params: params.backprop(task, &batch.all(), &coeffs),
        grad_a: terms.d_a,
        grad_b: terms.d_b,
        grad_alpha: terms.grad_alpha,
        frozen,
    })
}

/// Surrogate `G` averaged over `tasks`, returned with its gradient in the
/// primal layout.
pub fn pauc_surrogate_g(
    state: &PaucState,
    cfg: &PaucConfig,
    data: &TaskDataset,
    tasks: &BlockBatch,
    batches: &[StratifiedBatch],
) -> Result<(f64, Vector)> {
    let mut grad = Vector::zeros(state.z.len());
    let mut value = 0.0;
    for (&k, batch) in tasks.indices().iter().zip(batches) {
        let g = pauc_task_gradient(state, cfg, data.task(k), k, batch)?;
        value += g.value;
        scatter_primal(state, k, &g, &mut grad);
    }
    let scale = 1.0 / tasks.len() as f64;
    Ok((value * scale, grad * scale))
}

fn scatter_primal(state: &PaucState, k: usize, g: &PaucTaskGradient, grad: &mut Vector) {
    let n = state.scorer.num_params();
    let m = state.a.len();
    let mut scorer_part = grad.rows(0, n).into_owned();
    state.scorer.scatter_task(k, &g.grad_params, &mut scorer_part);
    grad.rows_mut(0, n).copy_from(&scorer_part);
    grad[n + k] += g.grad_a;
    grad[n + m + k] += g.grad_b;
}

#[derive(Debug, Clone)]
pub struct PaucStep {
    pub state: PaucState,
    pub delta: Vector,
    pub tasks: BlockBatch,
}

/// One iteration: sample tasks and class-stratified batches, ascend `α_k`,
/// descend `λ_k`, average `H_k`, form the surrogate gradient at the
/// pre-iteration state, average it into `z` and step `(w, a, b)`.
pub fn step_mmb_pauc(state: &PaucState, cfg: &PaucConfig, data: &TaskDataset, root: &RngStream) -> Result<PaucStep> {
    let m = data.num_tasks();
    cfg.validate(m)?;
    let t = state.t;
    let tasks = sample_blocks(&root.derive(t, 0, Purpose::BlockSelection), m, cfg.task_batch)?;
    let batches = tasks
        .indices()
        .iter()
        .map(|&k| {
            data.task(k)
                .stratified_batch(&root.derive(t, k as u64, Purpose::DataBatch), cfg.batch_pos, cfg.batch_neg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut delta = Vector::zeros(state.z.len());
    let mut next = state.clone();
    for (&k, batch) in tasks.indices().iter().zip(&batches) {
        let task = data.task(k);
        let lcfg = cfg.lambda_config(task)?;
        let g = pauc_task_gradient(state, cfg, task, k, batch)?;
        scatter_primal(state, k, &g, &mut delta);
        let h_neg = state.scorer.task_params(k).scores(task, &batch.negatives);
        next.alpha[k] = (state.alpha[k] + cfg.eta1 * g.grad_alpha).max(0.0);
        next.lambda[k] = state.lambda[k] - cfg.eta2 * lambda_grad(state.lambda[k], &h_neg, &lcfg);
        next.hess[k] = (1.0 - cfg.beta1) * state.hess[k] + cfg.beta1 * lambda_hess(state.lambda[k], &h_neg, &lcfg);
    }
    delta /= tasks.len() as f64;
    next.z = &state.z * (1.0 - cfg.beta0) + &delta * cfg.beta0;
    let x = state.primal() - &next.z * cfg.eta0;
    next.set_primal(&x)?;
    next.t += 1;
    Ok(PaucStep {
        state: next,
        delta,
        tasks,
    })
}

/// Runs `iterations` steps, calling `on_step` after each. Stops with a
/// numerical error on the first non-finite state.
pub fn train_pauc(
    mut state: PaucState,
    cfg: &PaucConfig,
    data: &TaskDataset,
    iterations: u64,
    on_step: &mut dyn FnMut(&PaucState) -> Result<()>,
) -> Result<PaucState> {
    let root = RngStream::root(cfg.seed);
    for _ in 0..iterations {
        state = step_mmb_pauc(&state, cfg, data, &root)?.state;
        if !state.is_finite() {
            return Err(Error::Numerical(format!("non-finite state after iteration {}", state.t - 1)));
        }
        on_step(&state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auc::data::SeparableSpec;
    use crate::auc::losses::{auc_minmax_loss, AucVars};
    use crate::auc::scorer::TaskParams;

    fn data() -> TaskDataset {
        SeparableSpec { tasks: 3, samples_per_task: 40, positive_fraction: 0.25, dim: 4, margin: 0.1, seed: 2 }
            .generate()
            .unwrap()
    }

    fn cfg() -> PaucConfig {
        PaucConfig {
            rho: 0.5,
            tau1: 0.2,
            tau2: 1e-3,
            epsilon: 0.01,
            margin: 1.0,
            eta0: 0.1,
            eta1: 0.1,
            eta2: 0.1,
            beta0: 0.5,
            beta1: 0.5,
            task_batch: 2,
            batch_pos: 3,
            batch_neg: 6,
            practical: false,
            iterations: 10,
            seed: 0,
        }
    }

    fn state(d: &TaskDataset, c: &PaucConfig, seed: u64) -> PaucState {
        let mut s = PaucState::new(Scorer::init(seed, 3, 4, 3, 1.5).unwrap(), d, c).unwrap();
        s.a = vec![0.2, -0.1, 0.4];
        s.b = vec![-0.3, 0.1, 0.0];
        s.alpha = vec![0.5, 0.1, 0.9];
        s.lambda[1] += 0.05;
        s.hess = vec![2.0, 0.7, 1.3];
        s
    }

    /// `G` over one task at `(w, a, b)` with coefficients frozen at `base`.
    fn frozen_value(base: &PaucState, x: &Vector, c: &PaucConfig, d: &TaskDataset, k: usize, batch: &StratifiedBatch) -> f64 {
        let frozen = pauc_task_gradient(base, c, d.task(k), k, batch).unwrap().frozen;
        let mut probe = base.clone();
        probe.set_primal(x).unwrap();
        let p = probe.scorer.task_params(k);
        let h_pos = p.scores(d.task(k), &batch.positives);
        let h_neg = p.scores(d.task(k), &batch.negatives);
        pauc_task_terms(&h_pos, &h_neg, probe.a[k], probe.b[k], &frozen, c).value
    }

    #[test]
    fn gradient_matches_frozen_finite_differences() {
        let d = data();
        for practical in [false, true] {
            let c = PaucConfig { practical, ..cfg() };
            for seed in 0..4 {
                let s = state(&d, &c, seed);
                let tasks = BlockBatch::new(vec![0, 2], 3).unwrap();
                let root = RngStream::root(seed);
                let batches: Vec<_> = [0usize, 2]
                    .iter()
                    .map(|&k| d.task(k).stratified_batch(&root.labelled(0, k as u64, 2), 3, 6).unwrap())
                    .collect();
                let (value, grad) = pauc_surrogate_g(&s, &c, &d, &tasks, &batches).unwrap();
                let x0 = s.primal();
                let f = |x: &Vector| {
                    0.5 * (frozen_value(&s, x, &c, &d, 0, &batches[0]) + frozen_value(&s, x, &c, &d, 2, &batches[1]))
                };
                assert!((f(&x0) - value).abs() < 1e-12);
                let h = 1e-5;
                let fd = Vector::from_fn(x0.len(), |j, _| {
                    let mut up = x0.clone();
                    let mut dn = x0.clone();
                    up[j] += h;
                    dn[j] -= h;
                    (f(&up) - f(&dn)) / (2.0 * h)
                });
                assert!((&grad - &fd).norm() / grad.norm() < 1e-5, "practical={practical} seed={seed}");
            }
        }
    }

    #[test]
    fn phi_one_limit_is_the_full_auc_gradient() {
        let d = data();
        let c = PaucConfig { rho: 1.0, tau1: 1e-3, ..cfg() };
        let mut s = state(&d, &c, 7);
        s.lambda = vec![-1e3; 3];
        let k = 1;
        let batch = d.task(k).stratified_batch(&RngStream::root(5).labelled(0, 1, 2), 3, 6).unwrap();
        let g = pauc_task_gradient(&s, &c, d.task(k), k, &batch).unwrap();
        let vars = AucVars { a: s.a[k], b: s.b[k], alpha: s.alpha[k] };
        let full = auc_minmax_loss(&s.scorer.task_params(k), vars, c.margin, d.task(k), k, &batch).unwrap();
        assert!((&g.grad_params - &full.grad_params).amax() < 1e-8);
        assert!((g.grad_a - full.grad_a).abs() < 1e-8);
        assert!((g.grad_b - full.grad_b).abs() < 1e-8);
        assert!((g.grad_alpha - full.grad_alpha).abs() < 1e-8);
    }

    #[test]
    fn two_sample_linear_case_by_hand() {
        // One positive score p and one negative score n; practical mode.
        let c = PaucConfig { rho: 1.0, practical: true, ..cfg() };
        let (p, n, a, b, alpha, lam) = (0.8, 0.3, 0.1, -0.2, 0.4, 0.0);
        let phi = sigmoid(n - lam);
        let frozen = FrozenCoefficients::at(&[n], b, alpha, lam, 1.0, 1.0);
        let t = pauc_task_terms(&[p], &[n], a, b, &frozen, &c);
        assert!((t.d_pos[0] - (2.0 * (p - a) - 2.0 * alpha)).abs() < 1e-15);
        assert!((t.d_neg[0] - (2.0 * phi * (n - b) + 2.0 * alpha * phi)).abs() < 1e-15);
        assert!((t.d_a + 2.0 * (p - a)).abs() < 1e-15);
        assert!((t.d_b + 2.0 * phi * (n - b)).abs() < 1e-15);
        assert!((t.grad_alpha - (2.0 * (phi * n - p + 1.0) - 2.0 * alpha)).abs() < 1e-15);
        // With a scorer h = v·tanh(w x) on scalars, the chain rule gives
        // ∂G/∂v = d_pos·tanh(w x₊) + d_neg·tanh(w x₋).
        let (w, v, xp, xn): (f64, f64, f64, f64) = (0.7, 1.3, 1.0, -0.5);
        let grad_v = t.d_pos[0] * (w * xp).tanh() + t.d_neg[0] * (w * xn).tanh();
        let grad_w = t.d_pos[0] * v * (1.0 - (w * xp).tanh().powi(2)) * xp
            + t.d_neg[0] * v * (1.0 - (w * xn).tanh().powi(2)) * xn;
        let task = Task::new(crate::linalg::Matrix::from_vec(2, 1, vec![xp, xn]), vec![1.0, -1.0]).unwrap();
        let params = TaskParams { w: crate::linalg::Matrix::from_element(1, 1, w), v: Vector::from_element(1, v) };
        let g = params.backprop(&task, &[0, 1], &[t.d_pos[0], t.d_neg[0]]);
        assert!((g[0] - grad_w).abs() < 1e-15 && (g[1] - grad_v).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_only_move_z() {
        let d = data();
        let c = PaucConfig { eta0: 0.0, eta1: 0.0, eta2: 0.0, beta0: 1.0, ..cfg() };
        let s = state(&d, &c, 3);
        let out = step_mmb_pauc(&s, &c, &d, &RngStream::root(1)).unwrap();
        assert_eq!(out.state.scorer, s.scorer);
        assert_eq!((&out.state.a, &out.state.b), (&s.a, &s.b));
        assert_eq!((&out.state.alpha, &out.state.lambda), (&s.alpha, &s.lambda));
        assert_eq!(out.state.z, out.delta);
        assert!(out.delta.norm() > 0.0);
    }

    #[test]
    fn duals_stay_non_negative_and_thresholds_track() {
        let d = data();
        let c = cfg();
        let mut s = state(&d, &c, 4);
        s.alpha = vec![0.0; 3];
        let root = RngStream::root(2);
        for _ in 0..200 {
            s = step_mmb_pauc(&s, &c, &d, &root).unwrap().state;
            assert!(s.alpha.iter().all(|&a| a >= 0.0));
            assert!(s.hess.iter().all(|&h| h > 0.0));
        }
    }

    #[test]
    fn threshold_sgd_on_frozen_scores_reaches_bisection() {
        let scores = [3.0, 2.0, 1.0];
        let lcfg = LambdaConfig { k: 1, n_minus: 3, tau1: 1e-3, tau2: 1e-6, epsilon: 0.01 };
        let exact = solve_lambda(&scores, &lcfg).unwrap();
        let mut lam = 0.0;
        for _ in 0..20_000 {
            lam -= 0.004 * lambda_grad(lam, &scores, &lcfg);
        }
        assert!((lam - exact).abs() < 1e-4, "{lam} vs {exact}");
    }
}
