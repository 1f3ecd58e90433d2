//! Synthetic experiments for model-selection conformal prediction.

pub mod dgp;
pub mod error;
pub mod experiment;
pub mod train;

pub use dgp::{DgpSpec, NoiseDist, ThetaRule, XDist};
pub use error::{Result, SimError};
pub use experiment::{
    run_experiment, run_experiment_with_threads, Experiment, ExperimentConfig, ExperimentSummary, MethodSummary,
    ScoreKind, Stat, Trial, TrialRecord, Truth,
};
pub use train::{two_model_class, ModelBank};
