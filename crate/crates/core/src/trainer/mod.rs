//! Off-policy actor-critic training (TD3 and SAC styles).

mod config;
mod metrics;
mod updates;

pub use config::{Algorithm, TrainerConfig};
pub use metrics::{write_metrics_csv, MetricsRow};
pub use updates::{actor_step, actor_surrogate, critic_loss_grad, td_targets, QFunction, TargetSpec};

use crate::critic::{Critic, CriticError};
use crate::nn::{Adam, ParamSet};
use crate::policy::Actor;
use crate::rl::{rollout, Env, ReplayBuffer, RlError, Transition};
use crate::rng::{normal, stream_rng, StreamRng};
use crate::tensor::TensorError;
use rand::Rng;
use thiserror::Error;


#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at step {step}: {what} is not finite")]
    Divergence { step: usize, what: &'static str },
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Fidelity(#[from] crate::fidelity::FidelityError),
}

impl TrainError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            TrainError::Divergence { .. } | TrainError::Rl(RlError::Divergence { .. })
        )
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

const STREAM_EXPLORE: u64 = 1;
const STREAM_REPLAY: u64 = 2;
const STREAM_UPDATE: u64 = 3;
const STREAM_ACTOR_INIT: u64 = 10;
const STREAM_CRITIC_INIT: u64 = 11;
const EVAL_SALT: u64 = 0x5eed_e7a1;

/// Training state for one seed.
pub struct Trainer<E: Env> {
    cfg: TrainerConfig,
    env: E,
    gamma: f64,
    actor: Actor,
    actor_target: Actor,
    critics: [Critic; 2],
    critic_targets: [Critic; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    buffer: ReplayBuffer,
    explore_rng: StreamRng,
    update_rng: StreamRng,
    state: Vec<f64>,
    episode_step: usize,
    step: usize,
    updates: usize,
    window_td: Vec<f64>,
    window_surrogate: Vec<f64>,
}

impl<E: Env> Trainer<E> {
    pub fn new(cfg: TrainerConfig, env: E) -> Self {
        let (n_s, n_a) = (env.state_dim(), env.action_dim());
        let seed = cfg.seed;
        let actor = Actor::new(
            cfg.policy_kind(),
            n_s,
            n_a,
            &cfg.actor_hidden,
            cfg.action_scale,
            &mut stream_rng(seed, STREAM_ACTOR_INIT),
        );
        let mut init = stream_rng(seed, STREAM_CRITIC_INIT);
        let critics = [
            Critic::new(cfg.critic, n_s, n_a, &cfg.critic_net, &mut init),
            Critic::new(cfg.critic, n_s, n_a, &cfg.critic_net, &mut init),
        ];
        let critic_lr = cfg.critic_lr();
        let critic_opts = [
            Adam::new(critic_lr, critics[0].params().numel()),
            Adam::new(critic_lr, critics[1].params().numel()),
        ];
        let mut explore_rng = stream_rng(seed, STREAM_EXPLORE);
        let state = env.reset(&mut explore_rng);
        Self {
            gamma: cfg.gamma.unwrap_or_else(|| env.gamma()),
            actor_opt: Adam::new(cfg.actor_lr, actor.params().numel()),
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
            critic_opts,
            buffer: ReplayBuffer::new(cfg.replay_capacity, seed, STREAM_REPLAY),
            explore_rng,
            update_rng: stream_rng(seed, STREAM_UPDATE),
            state,
            episode_step: 0,
            step: 0,
            updates: 0,
            window_td: Vec::new(),
            window_surrogate: Vec::new(),
            env,
            cfg,
        }
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn critic(&self) -> &Critic {
        &self.critics[0]
    }

    pub fn critics(&self) -> &[Critic; 2] {
        &self.critics
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Environment steps taken so far.
    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Every trained network, prefixed by role.
    pub fn checkpoint(&self) -> ParamSet {
        let mut all = self.actor.params().prefixed("actor");
        all.extend(self.critics[0].params().prefixed("critic0"));
        all.extend(self.critics[1].params().prefixed("critic1"));
        all
    }

    /// One environment interaction, exploring around the current policy
    /// (uniform actions during warmup).
    pub fn collect(&mut self) -> Result<()> {
        let n_a = self.env.action_dim();
        let bound = self.cfg.action_scale;
        let a: Vec<f64> = if self.step < self.cfg.warmup {
            (0..n_a)
                .map(|_| self.explore_rng.random_range(-bound..=bound))
                .collect()
        } else {
            match self.cfg.algorithm {
                Algorithm::Td3 => {
                    let mean = self.actor.mean_action(&self.state);
                    mean.iter()
                        .map(|m| {
                            (m + self.cfg.explore_std * bound * normal(&mut self.explore_rng)).clamp(-bound, bound)
                        })
                        .collect()
                }
                Algorithm::Sac => self.actor.sample_action(&self.state, &mut self.explore_rng),
            }
        };
        let (s_next, r) = self.env.step(&self.state, &a, &mut self.explore_rng);
        if !r.is_finite() || s_next.iter().any(|x| !x.is_finite()) {
            return Err(RlError::Divergence { step: self.step }.into());
        }
        self.episode_step += 1;
        let done = self.episode_step >= self.env.horizon();
        self.buffer.push(Transition {
            s: std::mem::replace(&mut self.state, s_next.clone()),
            a,
            r,
            s_next,
            done,
        });
        if done {
            self.state = self.env.reset(&mut self.explore_rng);
            self.episode_step = 0;
        }
        self.step += 1;
        Ok(())
    }

    /// One critic step and, every `policy_delay` critic steps, one actor
    /// step followed by target blending.
    pub fn update(&mut self) -> Result<()> {
        let batch = self.buffer.sample(self.cfg.batch())?;
        let spec = TargetSpec {
            gamma: self.gamma,
            reward_scale: self.cfg.reward_scale(),
            algorithm: self.cfg.algorithm,
            target_noise: self.cfg.target_noise * self.cfg.action_scale,
            target_clip: self.cfg.target_clip * self.cfg.action_scale,
            alpha_ent: self.cfg.alpha_ent,
        };
        let target_actor = match self.cfg.algorithm {
            Algorithm::Td3 => &self.actor_target,
            Algorithm::Sac => &self.actor,
        };
        let y = td_targets(&spec, target_actor, &self.critic_targets, &batch, &mut self.update_rng)?;
        let mut td = 0.0;
        for (c, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            let (loss, grad) = critic_loss_grad(c, &batch, &y)?;
            if !loss.is_finite() {
                return Err(TrainError::Divergence {
                    step: self.step,
                    what: "critic loss",
                });
            }
            opt.step(c.params_mut(), &grad);
            td += 0.5 * loss;
        }
        self.window_td.push(td);
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.policy_delay()) {
            let critics: Vec<&dyn QFunction> = match self.cfg.algorithm {
                Algorithm::Td3 => vec![&self.critics[0]],
                Algorithm::Sac => vec![&self.critics[0], &self.critics[1]],
            };
            let surrogate = actor_step(
                &mut self.actor,
                &mut self.actor_opt,
                &critics,
                &batch.s,
                self.cfg.alpha_ent,
                &mut self.update_rng,
            )?;
            if !surrogate.is_finite() {
                return Err(TrainError::Divergence {
                    step: self.step,
                    what: "actor surrogate",
                });
            }
            self.window_surrogate.push(surrogate);
            let tau = self.cfg.tau;
            for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
                t.params_mut().blend_from(c.params(), tau);
            }
            self.actor_target.params_mut().blend_from(self.actor.params(), tau);
        }
        Ok(())
    }

    /// Mean and population std of the undiscounted return over
    /// `eval_episodes` noiseless rollouts. Episode `i` always starts from
    /// the same stream, so successive evaluations share initial states.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        let mut returns = Vec::with_capacity(self.cfg.eval_episodes);
        let mut policy = |s: &[f64], _: &mut StreamRng| self.actor.mean_action(s);
        for i in 0..self.cfg.eval_episodes {
            let mut rng = stream_rng(self.cfg.seed ^ EVAL_SALT, i as u64);
            let traj = rollout(&self.env, &mut policy, self.env.horizon(), &mut rng)?;
            returns.push(traj.total_reward());
        }
        Ok(mean_std(&returns))
    }

    /// Full loop. `hook` runs after every environment step (and update).
    pub fn run(&mut self, hook: &mut dyn FnMut(&Self) -> Result<()>) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        while self.step < self.cfg.total_steps {
            self.collect()?;
            if self.step > self.cfg.warmup && self.buffer.len() >= self.cfg.batch() {
                self.update()?;
            }
            hook(self)?;
            if self.cfg.eval_every > 0 && self.step.is_multiple_of(self.cfg.eval_every) {
                let (mean, std) = self.evaluate()?;
                rows.push(MetricsRow {
                    step: self.step,
                    eval_return_mean: mean,
                    eval_return_std: std,
                    td_loss: window_mean(&mut self.window_td),
                    surrogate: window_mean(&mut self.window_surrogate),
                });
            }
        }
        Ok(rows)
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn window_mean(xs: &mut Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.clear();
    Some(m)
}
