//! Experiment configuration files (TOML).
//!
//! ```toml
//! kind = "synthetic-v1"        # synthetic-v1 | synthetic-v2 | auc-ct | pauc
//! record_every = 10
//! threshold = 0.01
//! output_dir = "out"
//!
//! [problem]                    # synthetic kinds
//! seed = 0
//! m = 8
//! d_x = 10
//! d_y = 5
//!
//! [run]                        # synthetic kinds; every field optional
//! eta0 = 0.001
//!
//! [sweep]                      # only read by `sweep`
//! block_batch = [1, 2, 4, 8]
//! seeds = [0, 1, 2, 3, 4]
//! ```
//!
//! AUC kinds replace `[problem]`/`[run]` by `[data]`, `[scorer]` and the
//! trainer section `[auc_ct]` or `[pauc]`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auc::{CtConfig, PaucConfig, SeparableSpec, TaskDataset};
use crate::error::{Error, Result};
use crate::optimizer::{RunConfig, Variant};
use crate::problem::{ProblemDims, SmoothnessProfile, SyntheticQuadraticProblem, DEFAULT_POPULATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SyntheticV1,
    SyntheticV2,
    AucCt,
    Pauc,
}

impl ExperimentKind {
    pub fn variant(self) -> Option<Variant> {
        match self {
            ExperimentKind::SyntheticV1 => Some(Variant::V1),
            ExperimentKind::SyntheticV2 => Some(Variant::V2),
            _ => None,
        }
    }

    pub fn is_synthetic(self) -> bool {
        self.variant().is_some()
    }
}

fn default_seed_list() -> Vec<u64> {
    (0..5).collect()
}

/// Random quadratic test problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub seed: u64,
    pub m: usize,
    pub d_x: usize,
    pub d_y: usize,
    #[serde(default)]
    pub profile: SmoothnessProfile,
    /// Samples per block behind each minibatch.
    #[serde(default = "SyntheticSpec::default_population")]
    pub population: usize,
    /// Lower bound on the curvature of the upper objective.
    #[serde(default = "SyntheticSpec::default_floor")]
    pub curvature_floor: f64,
}

impl SyntheticSpec {
    fn default_population() -> usize {
        DEFAULT_POPULATION
    }

    fn default_floor() -> f64 {
        SyntheticQuadraticProblem::DEFAULT_CURVATURE_FLOOR
    }

    pub fn dims(&self) -> ProblemDims {
        ProblemDims {
            m: self.m,
            d_x: self.d_x,
            d_y: self.d_y,
            d_alpha: 1,
        }
    }

    pub fn build(&self) -> Result<SyntheticQuadraticProblem> {
        SyntheticQuadraticProblem::generate_with_floor(self.seed, self.dims(), self.profile, Some(self.curvature_floor))?
            .with_population(self.population)
    }
}

/// Where task data comes from; exactly one field must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separable: Option<SeparableSpec>,
    /// One delimited file per task, rows `label, features…`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_files: Option<Vec<PathBuf>>,
    /// One delimited file, rows `label, task_id, features…`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_column_file: Option<PathBuf>,
}

impl DataSpec {
    pub fn validate(&self) -> Result<()> {
        let set = [self.separable.is_some(), self.task_files.is_some(), self.task_column_file.is_some()];
        if set.iter().filter(|&&b| b).count() != 1 {
            return Err(Error::config(
                "data: set exactly one of `separable`, `task_files`, `task_column_file`",
            ));
        }
        if self.task_files.as_ref().is_some_and(|f| f.is_empty()) {
            return Err(Error::config("data.task_files: list is empty"));
        }
        Ok(())
    }

    pub fn load(&self) -> Result<TaskDataset> {
        self.validate()?;
        if let Some(spec) = &self.separable {
            spec.generate()
        } else if let Some(files) = &self.task_files {
            TaskDataset::load_per_task(files)
        } else {
            TaskDataset::load_with_task_column(self.task_column_file.as_ref().expect("validated"))
        }
    }

    fn rebase(&mut self, base: &Path) {
        if let Some(files) = &mut self.task_files {
            for f in files.iter_mut() {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        if let Some(f) = &mut self.task_column_file {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSpec {
    pub hidden: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec {
            hidden: 8,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

/// Sweep axes. A missing axis keeps the base run value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_batch: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_batch: Option<Vec<usize>>,
    /// Run seeds replicated in every cell.
    #[serde(default = "default_seed_list")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Diagnostics cadence of the trace.
    #[serde(default = "ExperimentConfig::default_record_every")]
    pub record_every: u64,
    /// Stationarity level for `iterations_to_threshold`.
    #[serde(default = "ExperimentConfig::default_threshold")]
    pub threshold: f64,
    /// Fill the `elapsed_ms` trace column (makes traces machine dependent).
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default = "ExperimentConfig::default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<ScorerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_ct: Option<CtConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pauc: Option<PaucConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    fn default_record_every() -> u64 {
        10
    }

    fn default_threshold() -> f64 {
        1e-2
    }

    fn default_output_dir() -> PathBuf {
        PathBuf::from("out")
    }

    /// Parses TOML text, fills every section of the selected kind with its
    /// defaults, and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.normalize()?;
        Ok(cfg)
    }

    /// Canonical TOML: every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    fn normalize(&mut self) -> Result<()> {
        let foreign = |name: &str| Error::config(format!("section [{name}] does not belong to kind {:?}", self.kind));
        if self.kind.is_synthetic() {
            for (present, name) in [
                (self.data.is_some(), "data"),
                (self.scorer.is_some(), "scorer"),
                (self.auc_ct.is_some(), "auc_ct"),
                (self.pauc.is_some(), "pauc"),
            ] {
                if present {
                    return Err(foreign(name));
                }
            }
            if self.problem.is_none() {
                return Err(Error::config("missing section [problem]"));
            }
            self.run.get_or_insert_with(RunConfig::default);
        } else {
            for (present, name) in [(self.problem.is_some(), "problem"), (self.run.is_some(), "run")] {
                if present {
                    return Err(foreign(name));
                }
            }
            match self.kind {
                ExperimentKind::AucCt if self.pauc.is_some() => return Err(foreign("pauc")),
                ExperimentKind::Pauc if self.auc_ct.is_some() => return Err(foreign("auc_ct")),
                ExperimentKind::AucCt => {
                    self.auc_ct.get_or_insert_with(CtConfig::default);
                }
                _ => {
                    self.pauc.get_or_insert_with(PaucConfig::default);
                }
            }
            if self.data.is_none() {
                return Err(Error::config("missing section [data]"));
            }
            self.scorer.get_or_insert_with(ScorerSpec::default);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.record_every == 0 {
            return Err(Error::config("record_every: must be at least 1"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::config("threshold: must be positive"));
        }
        if let Some(p) = &self.problem {
            p.dims().validate()?;
            p.profile.validate()?;
            if p.population == 0 {
                return Err(Error::config("problem.population: must be at least 1"));
            }
            if let Some(run) = &self.run {
                run.validate(p.m)?;
            }
        }
        if let Some(d) = &self.data {
            d.validate()?;
        }
        if let Some(s) = &self.scorer {
            if s.hidden == 0 || !(s.init_scale >= 0.0) {
                return Err(Error::config("scorer: hidden must be ≥ 1 and init_scale ≥ 0"));
            }
        }
        if let Some(s) = &self.sweep {
            for (name, axis) in [("block_batch", &s.block_batch), ("data_batch", &s.data_batch)] {
                if let Some(a) = axis {
                    if a.is_empty() {
                        return Err(Error::config(format!("sweep.{name}: axis is empty")));
                    }
                    if a.iter().enumerate().any(|(i, v)| a[..i].contains(v)) {
                        return Err(Error::config(format!("sweep.{name}: repeated value")));
                    }
                }
            }
            if s.seeds.is_empty() {
                return Err(Error::config("sweep.seeds: list is empty"));
            }
            if s.seeds.iter().enumerate().any(|(i, v)| s.seeds[..i].contains(v)) {
                return Err(Error::config("sweep.seeds: repeated value"));
            }
        }
        Ok(())
    }

    /// Resolves relative data paths against `base`, normally the directory
    /// holding the configuration file.
    pub fn rebase(&mut self, base: &Path) {
        if let Some(d) = &mut self.data {
            d.rebase(base);
        }
    }

    /// SHA-256 of the canonical form with the output directory blanked, so
    /// moving the outputs does not change the fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Replaces the seed driving the optimizer's randomness.
    pub fn set_run_seed(&mut self, seed: u64) {
        if let Some(r) = &mut self.run {
            r.seed = seed;
        }
        if let Some(c) = &mut self.auc_ct {
            c.seed = seed;
        }
        if let Some(p) = &mut self.pauc {
            p.seed = seed;
        }
    }

    /// Number of iterations the selected trainer will run.
    pub fn horizon(&self) -> u64 {
        match self.kind {
            ExperimentKind::AucCt => self.auc_ct.as_ref().map_or(0, |c| c.iterations),
            ExperimentKind::Pauc => self.pauc.as_ref().map_or(0, |c| c.iterations),
            _ => self.run.as_ref().map_or(0, |r| r.horizon),
        }
    }
}

/// Reads and validates a configuration file. Relative data paths are kept
/// as written; see [`ExperimentConfig::rebase`].
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
