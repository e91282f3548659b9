//! Two-stage training of the regressor (with critic and encoder), loss
//! probes and the ablation suite.

mod ablation;
mod config;
mod gradcheck;
mod probe;
mod terms;
mod trainer;

pub use ablation::*;
pub use config::{TrainingConfig, Variant, VariantFlags};
pub use gradcheck::{check_loss_term, GradCheckSetup, LossTerm};
pub use probe::{probe_losses, BatchRegressor, OracleRegressor, Pass};
pub use terms::{annotated_term, wild_terms, WildSampleTerms};
pub use trainer::{
    critic_step, train_stage1, train_stage1_with, train_stage2, train_stage2_with, CriticReport, EpochHook, Progress,
    StepLog, TrainState, TrainingData,
};
