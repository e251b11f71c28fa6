//! Context-conditioned meta-policies, first-order MAML gradients and the
//! gradient-noise harness.

mod grad;
mod noise;
mod policy;


pub use grad::{
    adapt, advantages, collect, direct_multi_task_gradient, factored_meta_gradient, meta_gradient, multi_task_gradient,
    task_policy_gradient, task_surrogate, Phase, TaskBatch, TaskSpec,
};
pub use noise::{
    evaluate_pool, grad_noise_harness, meta_train, write_noise_csv, MetaRow, MetaTrainConfig, NoiseConfig, NoiseRow,
    NoiseStats, UpdateRule,
};
pub use policy::{gaussian_log_prob, MetaPolicy, MetaPolicyConfig, MetaPolicyKind, TaskActor};

use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("empty trajectory batch")]
    EmptyBatch,
    #[error("{op} requires a hyper-context policy, got {kind:?}")]
    WrongKind { op: &'static str, kind: MetaPolicyKind },
    #[error("meta-training diverged at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
