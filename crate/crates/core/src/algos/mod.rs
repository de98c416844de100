//! Rollouts, advantage estimation and the policy-gradient trainers.

pub mod checkpoint;
pub mod gae;
pub mod lagrangian;
pub mod oracle;
pub mod rollout;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use lagrangian::{grad_eta, grad_lambda, lagrangian, penalty_weights, update_beta};
pub use oracle::{check_penalty_gradient, PenaltyGradientReport};
pub use rollout::{
    collect_rollouts, evaluate, ActionSelection, EvalReturns, EvalSettings, RolloutBatch, RolloutSource,
};
pub use trainer::{
    cppo_update, policy_gradient, ppo_update, run_epoch, score_function_gradient, update, vpg_update, Algo, CppoState,
    EpochReport, Objective, PolicyGradient, TrainConfig, UpdateDiagnostics,
};

use thiserror::Error;

use crate::envs::EnvError;
use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("environment fault in trajectory {trajectory}: {source}")]
    Env { trajectory: usize, source: EnvError },
    #[error("batch collected at update {collected_at} but parameters are at update {current}")]
    StaleBatch { collected_at: u64, current: u64 },
    #[error("non-finite update diagnostics {0:?}")]
    NonFinite(Box<UpdateDiagnostics>),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
