//! Two-stage optimization and time-marching over overlapping intervals.

mod config;
mod optim;
mod plan;
mod pretrain;

pub use config::{AdamConfig, LbfgsConfig, TrainConfig};
pub use optim::{
    adam_stage, clip_gradient, lbfgs_round, lbfgs_stage, learning_rate, Evaluation, Lbfgs, LogRow, LossTerms,
    RoundSummary, StageObjective, TrainingLog, LOG_HEADER,
};
pub use plan::{partition_time, Interval, IntervalPlan, TimeSchedule, OVERLAP_FRACTION};
pub use pretrain::{pretrain_sequence, NetworkObjective, PiecewiseSolution, PretrainOutcome, Problem, TrainedInterval};
