//! Joint loss, the training loop with early stopping, metrics and
//! cross-validation.

mod config;
mod cv;
mod early_stop;
mod fit;
mod loss;
mod metrics;

pub use config::{StopMetric, TrainingConfig};
pub use cv::{cross_validate, summarize, CrossValidation, FoldReport, MetricSummary, CV_VALIDATION_FRACTION};
pub use early_stop::{EarlyStopping, StopDecision};
pub use fit::{
    accumulate_batch_gradients, evaluate, evaluate_encoded, fit, mean_loss, save_history, write_history, Encoded,
    EpochRecord, FitOutcome,
};
pub use loss::{joint_loss, joint_loss_graph, LossBreakdown, LossVars};
pub use metrics::{ConfusionMatrix, EvalReport};
