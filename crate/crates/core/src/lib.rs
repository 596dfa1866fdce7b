//! Single-loop randomized stochastic algorithms for multi-block min-max
//! bilevel optimization:
//!
//! ```text
//! min_x max_{α ∈ A^m} (1/m) Σ_i f_i(x, α_i, y_i(x)),   y_i(x) = argmin_y g_i(x, y),
//! ```
//!
//! together with analytic test problems, exact hypergradient diagnostics,
//! multi-task AUC / partial-AUC objectives, and an experiment harness.

pub mod auc;
pub mod error;
pub mod experiment;
pub mod hypergrad;
pub mod linalg;
pub mod optimizer;
pub mod problem;
pub mod sampling;
pub mod verify;

pub use error::{Error, Result};
