//! Experiment harness: configuration files, single runs and sweeps.

mod config;
mod run;
mod sweep;

pub use config::{
    parse_config, DataSpec, ExperimentConfig, ExperimentKind, ScorerSpec, SweepSpec, SyntheticSpec,
};
pub use run::{read_summary, run_experiment, write_summary, SummaryRecord, SummaryStatus, SUMMARY_FILE, TRACE_FILE};
pub use sweep::{run_sweep, SweepCell, SweepOutcome, SweepRun, SWEEP_RUNS_FILE, SWEEP_SUMMARY_FILE};
