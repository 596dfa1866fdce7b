//! Ablation sweeps over `block_batch × data_batch × seeds`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::run::{run_synthetic, write_summary, SummaryRecord, SummaryStatus, SUMMARY_FILE};

pub const SWEEP_RUNS_FILE: &str = "sweep_runs.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

/// One `(cell, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub block_batch: usize,
    pub data_batch: usize,
    pub seed: u64,
    /// `None` when the run could not be started or written.
    pub summary: Option<SummaryRecord>,
    pub error: Option<String>,
}

impl SweepRun {
    fn ok(&self) -> bool {
        self.summary.as_ref().is_some_and(|s| s.succeeded())
    }
}

/// Aggregate of one cell over its seeds. Runs that never reach the threshold
/// count as `horizon` iterations (right-censored) in the mean and std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub block_batch: usize,
    pub data_batch: usize,
    pub seeds: usize,
    pub failed: usize,
    pub censored: usize,
    pub mean_iterations: Option<f64>,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std_iterations: Option<f64>,
    pub mean_final_stationarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub runs: Vec<SweepRun>,
    pub cells: Vec<SweepCell>,
}

impl SweepOutcome {
    pub fn cell(&self, block_batch: usize, data_batch: usize) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.block_batch == block_batch && c.data_batch == data_batch)
    }

    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.failed > 0)
    }
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

fn aggregate(block_batch: usize, data_batch: usize, runs: &[&SweepRun], horizon: u64) -> SweepCell {
    let done: Vec<&SummaryRecord> = runs.iter().filter(|r| r.ok()).filter_map(|r| r.summary.as_ref()).collect();
    let iters: Vec<f64> = done
        .iter()
        .map(|s| s.iterations_to_threshold.unwrap_or(horizon) as f64)
        .collect();
    let (mean, std) = mean_std(&iters);
    let stat: Vec<f64> = done.iter().filter_map(|s| s.final_stationarity).collect();
    SweepCell {
        block_batch,
        data_batch,
        seeds: runs.len(),
        failed: runs.len() - done.len(),
        censored: done.iter().filter(|s| s.iterations_to_threshold.is_none()).count(),
        mean_iterations: mean,
        std_iterations: std,
        mean_final_stationarity: mean_std(&stat).0,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_tables(dir: &Path, outcome: &SweepOutcome) -> Result<()> {
    let mut runs = String::from(
        "block_batch,data_batch,seed,status,iterations_to_threshold,final_stationarity,random_tau_grad_norm_sq,wall_time_ms\n",
    );
    for r in &outcome.runs {
        let s = r.summary.as_ref();
        let status = match s.map(|s| s.status) {
            Some(SummaryStatus::Completed) => "completed",
            Some(SummaryStatus::Diverged) => "diverged",
            _ => "failed",
        };
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{},{},{}",
            r.block_batch,
            r.data_batch,
            r.seed,
            status,
            opt(s.and_then(|s| s.iterations_to_threshold)),
            opt(s.and_then(|s| s.final_stationarity)),
            opt(s.and_then(|s| s.random_tau_grad_norm_sq)),
            opt(s.map(|s| s.wall_time_ms)),
        );
    }
    let mut cells = String::from(
        "block_batch,data_batch,seeds,failed,censored,mean_iterations,std_iterations,mean_final_stationarity\n",
    );
    for c in &outcome.cells {
        let _ = writeln!(
            cells,
            "{},{},{},{},{},{},{},{}",
            c.block_batch,
            c.data_batch,
            c.seeds,
            c.failed,
            c.censored,
            opt(c.mean_iterations),
            opt(c.std_iterations),
            opt(c.mean_final_stationarity),
        );
    }
    for (name, text) in [(SWEEP_RUNS_FILE, runs), (SWEEP_SUMMARY_FILE, cells)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Runs every `(block_batch, data_batch, seed)` combination in parallel.
/// Each run writes `cell_b{B}_d{D}/seed_{s}/{trace.csv, summary.json}` below
/// the output directory; the merged tables are written last. A failing run
/// marks its cell instead of aborting the sweep.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    if !config.kind.is_synthetic() {
        return Err(Error::config("sweeps are only defined for synthetic kinds"));
    }
    let sweep = config.sweep.as_ref().ok_or_else(|| Error::config("missing section [sweep]"))?;
    let base_run = config.run.as_ref().ok_or_else(|| Error::config("missing section [run]"))?;
    let spec = config.problem.as_ref().ok_or_else(|| Error::config("missing section [problem]"))?;
    let problem = spec.build()?;
    let blocks = sweep.block_batch.clone().unwrap_or_else(|| vec![base_run.block_batch]);
    let samples = sweep.data_batch.clone().unwrap_or_else(|| vec![base_run.data_batch]);
    let root = &config.output_dir;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let mut jobs = Vec::new();
    for &b in &blocks {
        for &d in &samples {
            for &s in &sweep.seeds {
                jobs.push((b, d, s));
            }
        }
    }
    let runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|&(block_batch, data_batch, seed)| {
            let dir = root.join(format!("cell_b{block_batch}_d{data_batch}")).join(format!("seed_{seed}"));
            let mut cfg = config.clone();
            cfg.sweep = None;
            cfg.output_dir = dir.clone();
            if let Some(r) = &mut cfg.run {
                r.block_batch = block_batch;
                r.data_batch = data_batch;
            }
            cfg.set_run_seed(seed);
            let result = cfg
                .validate()
                .and_then(|_| fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e)))
                .and_then(|_| run_synthetic(&cfg, &problem, &dir))
                .and_then(|s| write_summary(&dir.join(SUMMARY_FILE), &s).map(|_| s));
            let (summary, error) = match result {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SweepRun {
                block_batch,
                data_batch,
                seed,
                summary,
                error,
            }
        })
        .collect();

    let mut cells = Vec::new();
    for &b in &blocks {
        for &d in &samples {
            let group: Vec<&SweepRun> = runs.iter().filter(|r| r.block_batch == b && r.data_batch == d).collect();
            cells.push(aggregate(b, d, &group, base_run.horizon));
        }
    }
    let outcome = SweepOutcome { runs, cells };
    write_tables(root, &outcome)?;
    Ok(outcome)
}
