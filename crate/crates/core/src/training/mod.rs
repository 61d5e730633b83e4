//! Finetuning with early stopping, best-epoch selection and grid search.

mod config;
mod grid;
mod stopping;
mod trainer;

pub use config::TrainConfig;
pub use grid::{grid_search, select_best, GridOutcome, GridPoint, GridRunSummary, GridSpec};
pub use stopping::{simulate_early_stopping, EarlyStopper, StopDecision, StopOutcome, StopReason};
pub use trainer::{predict, score, train, EpochRecord, LabeledSet, OptimizerSettings, TrainHistory};

use crate::datasets::Split;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{} split is empty", .0.as_str())]
    EmptySplit(Split),
    #[error("non-finite loss {value} at epoch {epoch}, step {step} (gradient norm {grad_norm:?})")]
    NonFiniteLoss { epoch: usize, step: usize, value: f64, grad_norm: Option<f64> },
    #[error("training config: {0}")]
    InvalidConfig(String),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("every grid point failed: {0:?}")]
    AllGridPointsFailed(Vec<String>),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
}
