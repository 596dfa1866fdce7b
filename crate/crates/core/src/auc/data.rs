//! Multi-task binary classification data.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::sampling::{sample_data_with, RngStream};

/// One task: `n × d` features and `±1` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    features: Matrix,
    labels: Vec<f64>,
    positives: Vec<usize>,
    negatives: Vec<usize>,
}

impl Task {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::config(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            if y == 1.0 {
                positives.push(i);
            } else if y == -1.0 {
                negatives.push(i);
            } else {
                return Err(Error::config(format!("label {y} at row {i} is not ±1")));
            }
        }
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::config("every task needs at least one positive and one negative"));
        }
        Ok(Task {
            features,
            labels,
            positives,
            negatives,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Sample `i` as a column vector.
    pub fn row(&self, i: usize) -> Vector {
        self.features.row(i).transpose()
    }

    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn negatives(&self) -> &[usize] {
        &self.negatives
    }

    pub fn n_plus(&self) -> usize {
        self.positives.len()
    }

    pub fn n_minus(&self) -> usize {
        self.negatives.len()
    }

    /// Draws `n_pos` positives and `n_neg` negatives with replacement.
    pub fn stratified_batch(&self, stream: &RngStream, n_pos: usize, n_neg: usize) -> Result<StratifiedBatch> {
        let mut rng = stream.rng();
        let pos = sample_data_with(&mut rng, self.n_plus(), n_pos)?;
        let neg = sample_data_with(&mut rng, self.n_minus(), n_neg)?;
        Ok(StratifiedBatch {
            positives: pos.into_iter().map(|i| self.positives[i]).collect(),
            negatives: neg.into_iter().map(|i| self.negatives[i]).collect(),
        })
    }

    /// The whole task as one batch.
    pub fn full_batch(&self) -> StratifiedBatch {
        StratifiedBatch {
            positives: self.positives.clone(),
            negatives: self.negatives.clone(),
        }
    }
}

/// Row indices of a minibatch, split by class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifiedBatch {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl StratifiedBatch {
    /// Every index, positives first.
    pub fn all(&self) -> Vec<usize> {
        self.positives.iter().chain(&self.negatives).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    tasks: Vec<Task>,
}

impl TaskDataset {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        let Some(first) = tasks.first() else {
            return Err(Error::config("dataset has no tasks"));
        };
        let d = first.dim();
        if tasks.iter().any(|t| t.dim() != d) {
            return Err(Error::config("tasks disagree on the feature dimension"));
        }
        Ok(TaskDataset { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, k: usize) -> &Task {
        &self.tasks[k]
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn dim(&self) -> usize {
        self.tasks[0].dim()
    }

    /// One task per file; each row is `label, f_1, …, f_d`.
    pub fn load_per_task<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let tasks = paths
            .iter()
            .map(|p| {
                let rows = read_rows(p.as_ref())?;
                let (labels, feats): (Vec<f64>, Vec<Vec<f64>>) =
                    rows.into_iter().map(|r| (r[0], r[1..].to_vec())).unzip();
                build_task(p.as_ref(), labels, feats)
            })
            .collect::<Result<Vec<_>>>()?;
        TaskDataset::new(tasks)
    }

    /// A single file whose rows are `label, task_id, f_1, …, f_d` with task
    /// ids `0..m`.
    pub fn load_with_task_column(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = read_rows(path)?;
        let mut grouped: Vec<(Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
        for (line, r) in rows.into_iter().enumerate() {
            if r.len() < 3 {
                return Err(parse_error(path, format!("row {} has no feature columns", line + 1)));
            }
            let id = r[1];
            if id < 0.0 || id.fract() != 0.0 {
                return Err(parse_error(path, format!("row {}: task id {id} is not a natural number", line + 1)));
            }
            let id = id as usize;
            if grouped.len() <= id {
                grouped.resize_with(id + 1, Default::default);
            }
            grouped[id].0.push(r[0]);
            grouped[id].1.push(r[2..].to_vec());
        }
        let tasks = grouped
            .into_iter()
            .enumerate()
            .map(|(k, (labels, feats))| {
                if labels.is_empty() {
                    return Err(parse_error(path, format!("task {k} has no rows")));
                }
                build_task(path, labels, feats)
            })
            .collect::<Result<Vec<_>>>()?;
        TaskDataset::new(tasks)
    }
}

fn parse_error(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message,
    }
}

fn build_task(path: &Path, labels: Vec<f64>, feats: Vec<Vec<f64>>) -> Result<Task> {
    let d = feats[0].len();
    if d == 0 || feats.iter().any(|f| f.len() != d) {
        return Err(parse_error(path, "rows must share a nonzero feature count".into()));
    }
    let features = Matrix::from_fn(feats.len(), d, |i, j| feats[i][j]);
    Task::new(features, labels).map_err(|e| parse_error(path, e.to_string()))
}

/// Comma, semicolon, tab or space separated numbers; `#` starts a comment.
fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_error(path, format!("line {}: cannot parse {s:?}", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() < 2 {
            return Err(parse_error(path, format!("line {}: need a label and features", n + 1)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, "no data rows".into()));
    }
    Ok(rows)
}

/// Generator for linearly separable tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableSpec {
    pub tasks: usize,
    pub samples_per_task: usize,
    pub positive_fraction: f64,
    pub dim: usize,
    /// Minimum distance of every sample from the separating hyperplane.
    #[serde(default = "SeparableSpec::default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SeparableSpec {
    fn default_margin() -> f64 {
        0.5
    }

    /// Each task has its own unit normal `u_k`. A sample is `g ± (margin + |e|)·u_k`
    /// with `g ⊥ u_k` Gaussian and `e` standard normal, `+` for positives.
    pub fn generate(&self) -> Result<TaskDataset> {
        if self.tasks == 0 || self.dim < 2 {
            return Err(Error::config("separable data needs at least one task and dim ≥ 2"));
        }
        let n_pos = (self.samples_per_task as f64 * self.positive_fraction).round() as usize;
        if n_pos == 0 || n_pos >= self.samples_per_task {
            return Err(Error::config("positive_fraction leaves a task with one class"));
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(Error::config("margin must be non-negative"));
        }
        let root = RngStream::root(self.seed);
        let tasks = (0..self.tasks)
            .map(|k| {
                let mut rng = root.labelled(k as u64, 0, 0).rng();
                let mut u = Vector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                u /= u.norm();
                let n = self.samples_per_task;
                let mut features = Matrix::zeros(n, self.dim);
                let mut labels = Vec::with_capacity(n);
                for i in 0..n {
                    let y = if i < n_pos { 1.0 } else { -1.0 };
                    let g = Vector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let g = &g - &u * u.dot(&g);
                    let e: f64 = rng.sample(StandardNormal);
                    let x = g + &u * (y * (self.margin + e.abs()));
                    features.set_row(i, &x.transpose());
                    labels.push(y);
                }
                Task::new(features, labels)
            })
            .collect::<Result<Vec<_>>>()?;
        TaskDataset::new(tasks)
    }
}
