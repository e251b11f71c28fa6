use crate::critic::{CriticConfig, CriticKind};
use crate::policy::PolicyKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Td3,
    Sac,
}

/// Hyperparameters of one training run. `None` fields take the
/// algorithm- or model-dependent default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub critic: CriticKind,
    pub critic_net: CriticConfig,
    pub actor_hidden: Vec<usize>,
    /// Actions are squashed to `[-action_scale, action_scale]`.
    pub action_scale: f64,
    pub actor_lr: f64,
    /// Defaults to 5e-5 for hypernetwork critics, 3e-4 otherwise.
    pub critic_lr: Option<f64>,
    /// Defaults to 100 (TD3) or 256 (SAC).
    pub batch: Option<usize>,
    /// Defaults to the environment's discount.
    pub gamma: Option<f64>,
    pub tau: f64,
    /// Defaults to 2 (TD3) or 1 (SAC).
    pub policy_delay: Option<usize>,
    /// Exploration noise std, relative to `action_scale`.
    pub explore_std: f64,
    /// Target-policy smoothing noise std and clip, relative to
    /// `action_scale`.
    pub target_noise: f64,
    pub target_clip: f64,
    pub alpha_ent: f64,
    /// Defaults to 1 (TD3) or 5 (SAC).
    pub reward_scale: Option<f64>,
    pub total_steps: usize,
    pub warmup: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub replay_capacity: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Td3,
            critic: CriticKind::SaHyper,
            critic_net: CriticConfig::default(),
            actor_hidden: vec![256, 256],
            action_scale: 4.0,
            actor_lr: 3e-4,
            critic_lr: None,
            batch: None,
            gamma: None,
            tau: 0.005,
            policy_delay: None,
            explore_std: 0.1,
            target_noise: 0.2,
            target_clip: 0.5,
            alpha_ent: 0.2,
            reward_scale: None,
            total_steps: 20_000,
            warmup: 1000,
            eval_every: 5000,
            eval_episodes: 10,
            replay_capacity: 1_000_000,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn policy_kind(&self) -> PolicyKind {
        match self.algorithm {
            Algorithm::Td3 => PolicyKind::DeterministicTanh,
            Algorithm::Sac => PolicyKind::GaussianReparam,
        }
    }

    pub fn critic_lr(&self) -> f64 {
        self.critic_lr
            .unwrap_or(if self.critic.is_hyper() { 5e-5 } else { 3e-4 })
    }

    pub fn batch(&self) -> usize {
        self.batch.unwrap_or(match self.algorithm {
            Algorithm::Td3 => 100,
            Algorithm::Sac => 256,
        })
    }

    pub fn policy_delay(&self) -> usize {
        self.policy_delay.unwrap_or(match self.algorithm {
            Algorithm::Td3 => 2,
            Algorithm::Sac => 1,
        })
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale.unwrap_or(match self.algorithm {
            Algorithm::Td3 => 1.0,
            Algorithm::Sac => 5.0,
        })
    }
}
