//! Single runs: stream the trace, write the summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auc::{step_mauc_ct, step_mmb_pauc, CtState, PaucState, Scorer, TaskDataset};
use crate::error::{Error, Result};
use crate::hypergrad::exact_grad;
use crate::optimizer::{run, RunOptions, RunStatus, TraceRecord, TRACE_HEADER};
use crate::problem::SyntheticQuadraticProblem;
use crate::sampling::{Purpose, RngStream};

use super::config::{ExperimentConfig, ExperimentKind};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryStatus {
    Completed,
    /// The state became non-finite.
    Diverged,
    /// The run stopped on an error other than divergence.
    Failed,
}

/// Outcome of one run. Stationarity fields are `‖∇F‖²` and only exist for
/// problems with an exact hypergradient; the metric fields only for AUC kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub fingerprint: String,
    pub kind: ExperimentKind,
    pub status: SummaryStatus,
    /// Iteration at which the state became non-finite.
    pub diverged_at: Option<u64>,
    /// Steps actually taken.
    pub iterations: u64,
    pub threshold: f64,
    /// First recorded `t` whose running-min stationarity is `≤ threshold`;
    /// `null` if never reached.
    pub iterations_to_threshold: Option<u64>,
    /// Running minimum of the recorded stationarity values.
    pub final_stationarity: Option<f64>,
    /// Stationarity at the last recorded iterate.
    pub last_grad_norm_sq: Option<f64>,
    /// Output index drawn uniformly from `0..=T`, and the stationarity of `x_τ`.
    pub random_tau: Option<u64>,
    pub random_tau_grad_norm_sq: Option<f64>,
    /// Objective at the final iterate.
    pub final_objective: Option<f64>,
    /// Mean over tasks of AUC (auc-ct) or pAUC at `rho` (pauc) on the training data.
    pub final_metric: Option<f64>,
    pub task_metrics: Vec<f64>,
    pub wall_time_ms: f64,
    pub error: Option<String>,
    pub config: ExperimentConfig,
}

impl SummaryRecord {
    fn new(config: &ExperimentConfig) -> Self {
        SummaryRecord {
            fingerprint: config.fingerprint(),
            kind: config.kind,
            status: SummaryStatus::Completed,
            diverged_at: None,
            iterations: 0,
            threshold: config.threshold,
            iterations_to_threshold: None,
            final_stationarity: None,
            last_grad_norm_sq: None,
            random_tau: None,
            random_tau_grad_norm_sq: None,
            final_objective: None,
            final_metric: None,
            task_metrics: Vec::new(),
            wall_time_ms: 0.0,
            error: None,
            config: config.clone(),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status == SummaryStatus::Completed
    }

    /// Folds one recorded stationarity value into the running minimum.
    fn observe(&mut self, iter: u64, grad_norm_sq: f64) {
        self.last_grad_norm_sq = Some(grad_norm_sq);
        if grad_norm_sq.is_nan() {
            return;
        }
        let best = self.final_stationarity.map_or(grad_norm_sq, |b| b.min(grad_norm_sq));
        self.final_stationarity = Some(best);
        if self.iterations_to_threshold.is_none() && best <= self.threshold {
            self.iterations_to_threshold = Some(iter);
        }
    }
}

/// Writes trace rows as they arrive; keeps the first io error.
struct TraceSink {
    path: PathBuf,
    out: BufWriter<File>,
    err: Option<std::io::Error>,
}

impl TraceSink {
    fn create(path: PathBuf) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut sink = TraceSink {
            path,
            out: BufWriter::new(file),
            err: None,
        };
        sink.line(TRACE_HEADER);
        Ok(sink)
    }

    fn line(&mut self, s: &str) {
        if self.err.is_none() {
            if let Err(e) = writeln!(self.out, "{s}") {
                self.err = Some(e);
            }
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.err.take() {
            return Err(Error::io(&self.path, e));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Runs `config` and writes `trace.csv` and `summary.json` into
/// `config.output_dir`. Divergence is reported through the summary status,
/// not as an error; errors are reserved for invalid input and io failures.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SummaryRecord> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = match config.kind {
        ExperimentKind::SyntheticV1 | ExperimentKind::SyntheticV2 => {
            let problem = config.problem.as_ref().ok_or_else(|| Error::config("missing section [problem]"))?.build()?;
            run_synthetic(config, &problem, dir)?
        }
        ExperimentKind::AucCt | ExperimentKind::Pauc => {
            let data = config.data.as_ref().ok_or_else(|| Error::config("missing section [data]"))?.load()?;
            run_auc(config, &data, dir)?
        }
    };
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn write_summary(path: &Path, summary: &SummaryRecord) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<SummaryRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Synthetic run on a prebuilt problem; writes the trace only.
pub(crate) fn run_synthetic(
    config: &ExperimentConfig,
    problem: &SyntheticQuadraticProblem,
    dir: &Path,
) -> Result<SummaryRecord> {
    let variant = config.kind.variant().expect("synthetic kind");
    let run_cfg = config.run.as_ref().ok_or_else(|| Error::config("missing section [run]"))?;
    let mut summary = SummaryRecord::new(config);
    let tau = RngStream::root(run_cfg.seed)
        .derive(0, 0, Purpose::TauSelection)
        .rng()
        .random_range(0..=run_cfg.horizon);
    let options = RunOptions {
        record_every: config.record_every,
        record_timing: config.record_timing,
        capture_at: Some(tau),
    };
    let mut sink = TraceSink::create(dir.join(TRACE_FILE))?;
    let start = Instant::now();
    let outcome = run(problem, run_cfg, variant, &options, &mut |rec: &TraceRecord| {
        sink.line(&rec.csv_row());
        if let Some(g) = rec.grad_norm_sq {
            summary.observe(rec.iter, g);
        }
    })?;
    summary.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    sink.finish()?;

    summary.iterations = outcome.state.t;
    summary.random_tau = Some(tau);
    if let Some(x) = &outcome.captured {
        summary.random_tau_grad_norm_sq = Some(exact_grad(problem, x)?.norm_squared());
    }
    match outcome.status {
        RunStatus::Completed => {
            summary.final_objective = Some(crate::problem::exact_objective(problem, &outcome.state.x));
        }
        RunStatus::Diverged { iter } => {
            summary.status = SummaryStatus::Diverged;
            summary.diverged_at = Some(iter);
            summary.iterations = iter + 1;
            summary.error = Some(format!("non-finite state after iteration {iter}"));
        }
    }
    Ok(summary)
}

enum AucRun {
    Ct(CtState),
    Pauc(PaucState),
}

impl AucRun {
    fn t(&self) -> u64 {
        match self {
            AucRun::Ct(s) => s.t,
            AucRun::Pauc(s) => s.t,
        }
    }

    fn objective(&self, config: &ExperimentConfig, data: &TaskDataset) -> Result<f64> {
        match self {
            AucRun::Ct(s) => s.objective(data, config.auc_ct.as_ref().expect("normalized")),
            AucRun::Pauc(s) => s.objective(data, config.pauc.as_ref().expect("normalized")),
        }
    }

    fn step(&self, config: &ExperimentConfig, data: &TaskDataset, root: &RngStream) -> Result<AucRun> {
        Ok(match self {
            AucRun::Ct(s) => AucRun::Ct(step_mauc_ct(s, config.auc_ct.as_ref().expect("normalized"), data, root)?.state),
            AucRun::Pauc(s) => {
                AucRun::Pauc(step_mmb_pauc(s, config.pauc.as_ref().expect("normalized"), data, root)?.state)
            }
        })
    }

    fn is_finite(&self) -> bool {
        match self {
            AucRun::Ct(s) => s.is_finite(),
            AucRun::Pauc(s) => s.is_finite(),
        }
    }

    fn metrics(&self, config: &ExperimentConfig, data: &TaskDataset) -> Result<Vec<f64>> {
        match self {
            AucRun::Ct(s) => s.task_aucs(data),
            AucRun::Pauc(s) => s.task_paucs(data, config.pauc.as_ref().expect("normalized").rho),
        }
    }
}

fn run_auc(config: &ExperimentConfig, data: &TaskDataset, dir: &Path) -> Result<SummaryRecord> {
    let scorer_spec = config.scorer.clone().unwrap_or_default();
    let scorer = Scorer::init(scorer_spec.seed, data.num_tasks(), data.dim(), scorer_spec.hidden, scorer_spec.init_scale)?;
    let (mut state, seed) = match config.kind {
        ExperimentKind::AucCt => {
            let cfg = config.auc_ct.as_ref().ok_or_else(|| Error::config("missing section [auc_ct]"))?;
            cfg.validate(data.num_tasks())?;
            (AucRun::Ct(CtState::new(scorer, data)?), cfg.seed)
        }
        _ => {
            let cfg = config.pauc.as_ref().ok_or_else(|| Error::config("missing section [pauc]"))?;
            cfg.validate(data.num_tasks())?;
            (AucRun::Pauc(PaucState::new(scorer, data, cfg)?), cfg.seed)
        }
    };
    let horizon = config.horizon();
    let root = RngStream::root(seed);
    let mut summary = SummaryRecord::new(config);
    let mut sink = TraceSink::create(dir.join(TRACE_FILE))?;
    let start = Instant::now();
    while state.t() < horizon {
        let t = state.t();
        if t % config.record_every == 0 || t + 1 == horizon {
            let mut rec = TraceRecord {
                iter: t,
                f: Some(state.objective(config, data)?),
                ..Default::default()
            };
            if config.record_timing {
                rec.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            sink.line(&rec.csv_row());
        }
        let next = state.step(config, data, &root)?;
        if !next.is_finite() {
            summary.status = SummaryStatus::Diverged;
            summary.diverged_at = Some(t);
            summary.iterations = t + 1;
            summary.error = Some(format!("non-finite state after iteration {t}"));
            break;
        }
        state = next;
    }
    summary.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    sink.finish()?;
    if summary.succeeded() {
        summary.iterations = state.t();
        summary.final_objective = Some(state.objective(config, data)?);
        let metrics = state.metrics(config, data)?;
        summary.final_metric = Some(metrics.iter().sum::<f64>() / metrics.len() as f64);
        summary.task_metrics = metrics;
    }
    Ok(summary)
}
