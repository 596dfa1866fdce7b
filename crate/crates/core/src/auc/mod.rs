//! Multi-task AUC and partial-AUC maximization on a tanh scorer.

pub mod ct;
pub mod data;
pub mod lambda;
pub mod losses;
pub mod metrics;
pub mod pauc;
pub mod scorer;

pub use ct::{compositional_lower_step, step_mauc_ct, train_mauc_ct, CtConfig, CtState, CtStep};
pub use data::{SeparableSpec, StratifiedBatch, Task, TaskDataset};
pub use lambda::{lambda_grad, lambda_hess, lambda_objective, solve_lambda, LambdaConfig};
pub use losses::{auc_minmax_loss, auc_minmax_scores, AucLoss, AucVars, ScoreSpaceLoss};
pub use metrics::{metric_auc, metric_pauc};
pub use pauc::{
    pauc_surrogate_g, pauc_task_gradient, pauc_task_terms, step_mmb_pauc, train_pauc, FrozenCoefficients,
    PaucConfig, PaucState, PaucStep, PaucTaskGradient, PaucTaskTerms,
};
pub use scorer::{sigmoid, softplus, Scorer, TaskParams};
