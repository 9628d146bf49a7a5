//! Training, prediction metrics and relational-reasoning evaluation.

pub mod metrics;
pub mod reasoning;
pub mod train;

pub use metrics::{ade_fde, constant_velocity, min_ade_fde, HorizonRow, MetricAccumulator, MetricReport};
pub use reasoning::{
    block_score, category_observations, eval_category, eval_groups, eval_strength, fit_mapping, reason,
    spearman, strength_curves, CategoryReport, StrengthCurve, GroupReport, Matching, SceneTrace, StrengthReport,
};
pub use train::{evaluate, predict_batch, train, Checkpoint, EpochLog, EvalOptions, TrainOptions, TrainOutcome};
