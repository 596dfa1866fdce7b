//! Single-loop randomized block algorithms (v1: Hessian momentum, v2:
//! projected Hessian-inverse–vector iterates) and their run loop.

mod config;
mod run;
mod state;
mod trace;
mod updates;

pub use config::{theory_step_sizes, RunConfig, TheoryStepSizes, Variant};
pub use run::{
    estimate_v1, estimate_v2, run, step, BlockBatches, RunOptions, RunOutcome, RunStatus,
    StepOutput,
};
pub use state::{CurvatureState, OptimizerState};
pub use trace::{write_trace_csv, TraceRecord, TRACE_HEADER};
pub use updates::{hessian_momentum_update, moving_average, project_ball, project_dual, v_update};
