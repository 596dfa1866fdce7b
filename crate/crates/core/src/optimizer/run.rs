//! One iteration of v1/v2 and the full run loop.
//!
//! Every random quantity of iteration `t` for block `i` is drawn from the
//! substream `(t, i, purpose)` of the run's root stream. Per-block work reads
//! only the pre-iteration state, and the block-averaged estimator is reduced
//! in ascending block order, so results do not depend on processing order.

use std::time::Instant;

use rand::RngCore;

use crate::error::Result;
use crate::hypergrad;
use crate::linalg::{Matrix, Vector};
use crate::problem::{BilevelProblem, OracleKind, OracleQuery};
use crate::sampling::{sample_blocks, sample_data, BlockBatch, Purpose, RngStream};

use super::config::{RunConfig, Variant};
use super::state::{CurvatureState, OptimizerState};
use super::trace::TraceRecord;
use super::updates::{hessian_momentum_update, moving_average, project_dual, v_update};

/// Minibatches drawn for one block in one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockBatches {
    /// `B_i^t`, shared by every oracle call of the block.
    pub data: Vec<usize>,
    /// Separate batch for the Jacobian factor of the v1 estimator, when
    /// `independent_product_batches` is on.
    pub product: Option<Vec<usize>>,
}

impl BlockBatches {
    pub fn draw<P: BilevelProblem + ?Sized>(
        problem: &P,
        root: &RngStream,
        t: u64,
        block: usize,
        config: &RunConfig,
    ) -> Result<Self> {
        let n = problem.population(block);
        let data = sample_data(&root.derive(t, block as u64, Purpose::DataBatch), n, config.data_batch)?;
        let product = if config.independent_product_batches {
            Some(sample_data(
                &root.derive(t, block as u64, Purpose::ProductBatch),
                n,
                config.data_batch,
            )?)
        } else {
            None
        };
        Ok(BlockBatches { data, product })
    }

    fn jacobian_batch(&self) -> &[usize] {
        self.product.as_deref().unwrap_or(&self.data)
    }
}

struct BlockCall<'a, P: ?Sized> {
    problem: &'a P,
    root: &'a RngStream,
    t: u64,
    block: usize,
    x: &'a Vector,
    alpha: &'a Vector,
    y: &'a Vector,
}

impl<P: BilevelProblem + ?Sized> BlockCall<'_, P> {
    fn call(&self, kind: OracleKind, batch: &[usize], purpose: Purpose) -> Result<crate::problem::OracleValue> {
        let query = OracleQuery {
            block: self.block,
            x: self.x,
            alpha: self.alpha,
            y: self.y,
            batch,
        };
        let mut rng = self.root.derive(self.t, self.block as u64, purpose).rng();
        self.problem.oracle(&query, kind, &mut rng as &mut dyn RngCore)
    }

    fn vector(&self, kind: OracleKind, batch: &[usize], purpose: Purpose) -> Result<Vector> {
        self.call(kind, batch, purpose)?.into_vector()
    }

    fn matrix(&self, kind: OracleKind, batch: &[usize], purpose: Purpose) -> Result<Matrix> {
        self.call(kind, batch, purpose)?.into_matrix()
    }
}

fn block_call<'a, P: BilevelProblem + ?Sized>(
    problem: &'a P,
    state: &'a OptimizerState,
    root: &'a RngStream,
    block: usize,
) -> BlockCall<'a, P> {
    BlockCall {
        problem,
        root,
        t: state.t,
        block,
        x: &state.x,
        alpha: &state.alpha[block],
        y: &state.y[block],
    }
}

/// Block term of the v1 estimator: `∇_x f_i − ∇²_xy g_i H_i^t ∇_y f_i`.
fn delta_term_v1<P: BilevelProblem + ?Sized>(
    call: &BlockCall<'_, P>,
    h: &Matrix,
    batches: &BlockBatches,
) -> Result<Vector> {
    let gxf = call.vector(OracleKind::GradXF, &batches.data, Purpose::GradXF)?;
    let gyf = call.vector(OracleKind::GradYF, &batches.data, Purpose::GradYF)?;
    let jac = call.matrix(OracleKind::JacXYG, batches.jacobian_batch(), Purpose::JacXYG)?;
    Ok(gxf - jac * (h * gyf))
}

/// Block term of the v2 estimator: `∇_x f_i − ∇²_xy g_i v_i^t`.
fn delta_term_v2<P: BilevelProblem + ?Sized>(
    call: &BlockCall<'_, P>,
    v: &Vector,
    batches: &BlockBatches,
) -> Result<Vector> {
    let gxf = call.vector(OracleKind::GradXF, &batches.data, Purpose::GradXF)?;
    let jac = call.matrix(OracleKind::JacXYG, &batches.data, Purpose::JacXYG)?;
    Ok(gxf - jac * v)
}

fn average_terms(d_x: usize, terms: impl Iterator<Item = Result<Vector>>, count: usize) -> Result<Vector> {
    let mut sum = Vector::zeros(d_x);
    for term in terms {
        sum += term?;
    }
    Ok(sum / count as f64)
}

/// v1 estimator `Δ^{t+1}` over `blocks`, using the cached `H_i^t`.
pub fn estimate_v1<P: BilevelProblem + ?Sized>(
    problem: &P,
    state: &OptimizerState,
    blocks: &BlockBatch,
    root: &RngStream,
    config: &RunConfig,
) -> Result<Vector> {
    let CurvatureState::Momentum { h, .. } = &state.curvature else {
        return Err(crate::Error::Contract("estimate_v1 needs a v1 state".into()));
    };
    let terms = blocks.indices().iter().map(|&i| {
        let batches = BlockBatches::draw(problem, root, state.t, i, config)?;
        delta_term_v1(&block_call(problem, state, root, i), &h[i], &batches)
    });
    average_terms(state.x.len(), terms, blocks.len())
}

/// v2 estimator `Δ^{t+1}` over `blocks`, using `v_i^t`.
pub fn estimate_v2<P: BilevelProblem + ?Sized>(
    problem: &P,
    state: &OptimizerState,
    blocks: &BlockBatch,
    root: &RngStream,
    config: &RunConfig,
) -> Result<Vector> {
    let CurvatureState::Iterate { v } = &state.curvature else {
        return Err(crate::Error::Contract("estimate_v2 needs a v2 state".into()));
    };
    let terms = blocks.indices().iter().map(|&i| {
        let batches = BlockBatches::draw(problem, root, state.t, i, config)?;
        delta_term_v2(&block_call(problem, state, root, i), &v[i], &batches)
    });
    average_terms(state.x.len(), terms, blocks.len())
}

enum CurvatureUpdate {
    Momentum { s: Matrix, h: Matrix },
    Iterate { v: Vector },
}

struct BlockOutcome {
    block: usize,
    alpha: Vector,
    y: Vector,
    curvature: CurvatureUpdate,
    delta: Vector,
}

fn block_outcome<P: BilevelProblem + ?Sized>(
    problem: &P,
    state: &OptimizerState,
    root: &RngStream,
    config: &RunConfig,
    block: usize,
) -> Result<BlockOutcome> {
    let call = block_call(problem, state, root, block);
    let batches = BlockBatches::draw(problem, root, state.t, block, config)?;
    let batch = &batches.data;

    let g_alpha = call.vector(OracleKind::GradAlphaF, batch, Purpose::GradAlphaF)?;
    let alpha = project_dual(&(call.alpha + g_alpha * config.eta1), &problem.dual_set())?;

    let g_y = call.vector(OracleKind::GradYG, batch, Purpose::GradYG)?;
    let y = call.y - g_y * config.eta2;

    let hess = call.matrix(OracleKind::HessYYG, batch, Purpose::HessYYG)?;
    let (curvature, delta) = match &state.curvature {
        CurvatureState::Momentum { s, h } => {
            let delta = delta_term_v1(&call, &h[block], &batches)?;
            let (s_new, h_new) = hessian_momentum_update(&s[block], &hess, config.beta1, true)?;
            let h_new = h_new.expect("selected blocks are refactorized");
            (CurvatureUpdate::Momentum { s: s_new, h: h_new }, delta)
        }
        CurvatureState::Iterate { v } => {
            let delta = delta_term_v2(&call, &v[block], &batches)?;
            let gyf = call.vector(OracleKind::GradYF, batch, Purpose::GradYFForV)?;
            let gamma = config.gamma(problem.profile());
            let v_new = v_update(&v[block], &hess, &gyf, config.eta3, gamma, true);
            (CurvatureUpdate::Iterate { v: v_new }, delta)
        }
    };
    Ok(BlockOutcome {
        block,
        alpha,
        y,
        curvature,
        delta,
    })
}

/// Result of one iteration.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: OptimizerState,
    /// The estimator `Δ^{t+1}`.
    pub delta: Vector,
    pub blocks: BlockBatch,
}

/// Executes iteration `state.t`: sample `I_t` and the minibatches, ascend
/// `α`, descend `y`, update `s`/`H` (v1) or `v` (v2), form `Δ`, average it
/// into `z`, and move `x ← x − η₀ z`. Blocks outside `I_t` are left untouched.
pub fn step<P: BilevelProblem + ?Sized>(
    state: &OptimizerState,
    problem: &P,
    root: &RngStream,
    config: &RunConfig,
) -> Result<StepOutput> {
    let m = problem.dims().m;
    let blocks = sample_blocks(&root.derive(state.t, 0, Purpose::BlockSelection), m, config.block_batch)?;
    let outcomes = blocks
        .indices()
        .iter()
        .map(|&i| block_outcome(problem, state, root, config, i))
        .collect::<Result<Vec<_>>>()?;

    let delta = average_terms(
        state.x.len(),
        outcomes.iter().map(|o| Ok(o.delta.clone())),
        outcomes.len(),
    )?;
    let mut next = state.clone();
    next.z = moving_average(&state.z, &delta, config.beta0);
    next.x = &state.x - &next.z * config.eta0;
    for o in outcomes {
        next.alpha[o.block] = o.alpha;
        next.y[o.block] = o.y;
        match (&mut next.curvature, o.curvature) {
            (CurvatureState::Momentum { s, h }, CurvatureUpdate::Momentum { s: s_new, h: h_new }) => {
                s[o.block] = s_new;
                h[o.block] = h_new;
            }
            (CurvatureState::Iterate { v }, CurvatureUpdate::Iterate { v: v_new }) => {
                v[o.block] = v_new;
            }
            _ => unreachable!("block outcome matches the state variant"),
        }
    }
    next.t += 1;
    Ok(StepOutput {
        state: next,
        delta,
        blocks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Diagnostics cadence; iteration `t` is recorded when `t % record_every == 0`
    /// and the last iteration is always recorded.
    pub record_every: u64,
    /// Fill `elapsed_ms`. Off gives byte-reproducible traces.
    pub record_timing: bool,
    /// Keep a copy of `x_t` for this `t`, e.g. a randomly drawn output index.
    pub capture_at: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            record_every: 10,
            record_timing: false,
            capture_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// A non-finite value appeared in the state after iteration `iter`.
    Diverged { iter: u64 },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    pub state: OptimizerState,
    pub status: RunStatus,
    /// `x_t` at `RunOptions::capture_at`, if the run reached it.
    pub captured: Option<Vector>,
}

fn pre_step_record<P: BilevelProblem + ?Sized>(
    problem: &P,
    state: &OptimizerState,
) -> Result<(TraceRecord, Option<Vector>)> {
    let mut rec = TraceRecord {
        iter: state.t,
        ..Default::default()
    };
    let Some(analytic) = problem.analytic() else {
        return Ok((rec, None));
    };
    if !state.is_finite() {
        return Ok((rec, None));
    }
    let grad = hypergrad::exact_grad(analytic, &state.x)?;
    let deltas = hypergrad::delta_errors(analytic, state)?;
    rec.f = Some(crate::problem::exact_objective(analytic, &state.x));
    rec.grad_norm_sq = Some(grad.norm_squared());
    rec.delta_y = Some(deltas.delta_y);
    rec.delta_alpha = Some(deltas.delta_alpha);
    rec.delta_h_or_v = Some(deltas.delta_h_or_v);
    Ok((rec, Some(grad)))
}

/// Runs `config.horizon` iterations from the default initial state.
pub fn run<P: BilevelProblem + ?Sized>(
    problem: &P,
    config: &RunConfig,
    variant: Variant,
    options: &RunOptions,
    on_record: &mut dyn FnMut(&TraceRecord),
) -> Result<RunOutcome> {
    let state = OptimizerState::initial(problem, variant)?;
    run_from(problem, config, state, options, on_record)
}

/// Runs `config.horizon` iterations starting at `state`.
pub fn run_from<P: BilevelProblem + ?Sized>(
    problem: &P,
    config: &RunConfig,
    mut state: OptimizerState,
    options: &RunOptions,
    on_record: &mut dyn FnMut(&TraceRecord),
) -> Result<RunOutcome> {
    config.validate(problem.dims().m)?;
    state.check_shapes(problem)?;
    if options.record_every == 0 {
        return Err(crate::Error::config("record_every must be at least 1"));
    }
    let root = RngStream::root(config.seed);
    let start = Instant::now();
    let mut trace = Vec::new();
    let mut status = RunStatus::Completed;
    let mut captured = None;
    let first = state.t;
    let last = first + config.horizon;
    while state.t < last {
        let t = state.t;
        if options.capture_at == Some(t) {
            captured = Some(state.x.clone());
        }
        let record = (t - first) % options.record_every == 0 || t + 1 == last;
        let pre = if record {
            Some(pre_step_record(problem, &state)?)
        } else {
            None
        };
        let out = step(&state, problem, &root, config)?;
        let finite = out.state.is_finite();
        if let Some((mut rec, grad)) = pre {
            if let Some(g) = grad {
                rec.est_gap_sq = Some((g - &out.state.z).norm_squared());
            }
            if options.record_timing {
                rec.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            on_record(&rec);
            trace.push(rec);
        }
        state = out.state;
        if !finite {
            status = RunStatus::Diverged { iter: t };
            if !record {
                let rec = TraceRecord {
                    iter: t,
                    grad_norm_sq: Some(f64::NAN),
                    ..Default::default()
                };
                on_record(&rec);
                trace.push(rec);
            }
            break;
        }
    }
    if status == RunStatus::Completed && options.capture_at == Some(state.t) {
        captured = Some(state.x.clone());
    }
    Ok(RunOutcome {
        trace,
        state,
        status,
        captured,
    })
}
