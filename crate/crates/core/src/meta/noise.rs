use super::grad::{meta_gradient, TaskSpec};
use super::policy::{MetaPolicy, MetaPolicyConfig, MetaPolicyKind};
use super::MetaError;
use crate::rl::{Env, PointMass, TaskFamily};
use crate::rng::{stream_id, stream_rng};
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

const NOISE_TAG: u64 = 0x9015e;
const TRAIN_TAG: u64 = 0x7a1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Outer gradient at the current parameters, no adaptation.
    MultiTask,
    /// First-order MAML with one inner step.
    Maml,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Independent updates per checkpoint.
    pub repeats: usize,
    /// Tasks drawn from the pool for one update.
    pub tasks_per_update: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            repeats: 50,
            tasks_per_update: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaTrainConfig {
    pub family: TaskFamily,
    pub kind: MetaPolicyKind,
    pub policy: MetaPolicyConfig,
    pub rule: UpdateRule,
    pub iterations: usize,
    /// Tasks per outer update.
    pub meta_batch: usize,
    /// Trajectories per task and phase.
    pub trajectories: usize,
    /// Outer step on the task-averaged gradient.
    pub lr: f64,
    pub eta_inner: f64,
    /// Size of the fixed task pool shared by training and the harness.
    pub task_pool: usize,
    /// Iterations at which the noise harness runs (before that iteration's
    /// update).
    pub checkpoints: Vec<usize>,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for MetaTrainConfig {
    fn default() -> Self {
        Self {
            family: TaskFamily::Goal,
            kind: MetaPolicyKind::HyperContext,
            policy: MetaPolicyConfig::default(),
            rule: UpdateRule::Maml,
            iterations: 100,
            meta_batch: 40,
            trajectories: 20,
            lr: 1e-3,
            eta_inner: 1e-3,
            task_pool: 40,
            checkpoints: vec![0, 25, 50, 75],
            noise: NoiseConfig::default(),
            seed: 0,
        }
    }
}

impl MetaTrainConfig {
    pub fn pool(&self) -> Vec<PointMass> {
        self.family
            .sample_tasks(self.task_pool, &mut stream_rng(self.seed, stream_id(&[TRAIN_TAG, 0])))
    }

    pub fn init_policy(&self) -> MetaPolicy {
        let probe = PointMass::new(self.family, vec![0.0; self.family.context_dim()]);
        MetaPolicy::new(
            self.kind,
            probe.state_dim(),
            probe.action_dim(),
            self.family.context_dim(),
            &self.policy,
            &mut stream_rng(self.seed, stream_id(&[TRAIN_TAG, 1])),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStats {
    pub returns: Vec<f64>,
    pub mean: f64,
    /// Sample std, absent for a single update.
    pub std: Option<f64>,
    /// `σ / |μ|`, absent when `std` is or `μ = 0`.
    pub cov: Option<f64>,
}

impl NoiseStats {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len();
        let mean = returns.iter().sum::<f64>() / n.max(1) as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = returns.iter().map(|r| (r - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        let cov = std.filter(|_| mean != 0.0).map(|s| s / mean.abs());
        Self {
            returns,
            mean,
            std,
            cov,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRow {
    pub checkpoint: usize,
    pub model_kind: MetaPolicyKind,
    pub stats: NoiseStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaRow {
    pub iteration: usize,
    /// Mean sampled return of the outer-phase rollouts.
    pub sample_return: f64,
    /// Deterministic mean-action return averaged over the pool.
    pub eval_return: f64,
}

/// Mean-action return averaged over tasks; deterministic.
pub fn evaluate_pool(policy: &MetaPolicy, pool: &[PointMass]) -> Result<f64, MetaError> {
    let mut total = 0.0;
    for task in pool {
        let actor = policy.actor(&task.context)?;
        let mut rng = stream_rng(0, 0);
        let mut s = task.reset(&mut rng);
        for _ in 0..task.horizon() {
            let a = actor.mean(&Tensor::row(s.clone()))?;
            let (next, r) = task.step(&s, a.data(), &mut rng);
            total += r;
            s = next;
        }
    }
    Ok(total / pool.len().max(1) as f64)
}

fn draw_specs(pool: &[PointMass], n: usize, seed: u64, parts: &[u64]) -> Vec<TaskSpec> {
    let mut rng = stream_rng(seed, stream_id(parts));
    (0..n)
        .map(|j| {
            let mut key = parts.to_vec();
            key.push(j as u64);
            TaskSpec {
                task: pool[rng.random_range(0..pool.len())].clone(),
                stream: stream_id(&key),
            }
        })
        .collect()
}

fn outer_step(policy: &mut MetaPolicy, cfg: &MetaTrainConfig, specs: &[TaskSpec]) -> Result<f64, MetaError> {
    let eta = match cfg.rule {
        UpdateRule::MultiTask => 0.0,
        UpdateRule::Maml => cfg.eta_inner,
    };
    let (grad, ret) = meta_gradient(policy, specs, eta, cfg.trajectories, cfg.seed)?;
    policy.params_mut().axpy(cfg.lr / specs.len() as f64, &grad);
    Ok(ret)
}

/// Performance spread of `repeats` independent one-step updates from the
/// same parameters; parameters are restored after each.
pub fn grad_noise_harness(
    policy: &mut MetaPolicy,
    pool: &[PointMass],
    cfg: &MetaTrainConfig,
    checkpoint: usize,
) -> Result<NoiseStats, MetaError> {
    let saved = policy.params().flatten();
    let mut returns = Vec::with_capacity(cfg.noise.repeats);
    for n in 0..cfg.noise.repeats {
        let specs = draw_specs(
            pool,
            cfg.noise.tasks_per_update,
            cfg.seed,
            &[NOISE_TAG, checkpoint as u64, n as u64],
        );
        let step = outer_step(policy, cfg, &specs).and_then(|_| evaluate_pool(policy, pool));
        policy.params_mut().set_flat(&saved);
        returns.push(step?);
    }
    Ok(NoiseStats::from_returns(returns))
}

/// Meta-trains one policy; runs the harness at each checkpoint.
pub fn meta_train(cfg: &MetaTrainConfig) -> Result<(MetaPolicy, Vec<MetaRow>, Vec<NoiseRow>), MetaError> {
    let pool = cfg.pool();
    let mut policy = cfg.init_policy();
    let mut rows = Vec::new();
    let mut noise = Vec::new();
    for it in 0..=cfg.iterations {
        if cfg.checkpoints.contains(&it) {
            let stats = grad_noise_harness(&mut policy, &pool, cfg, it)?;
            noise.push(NoiseRow {
                checkpoint: it,
                model_kind: cfg.kind,
                stats,
            });
        }
        if it == cfg.iterations {
            break;
        }
        let specs = draw_specs(&pool, cfg.meta_batch, cfg.seed, &[TRAIN_TAG, 2, it as u64]);
        let sample_return = outer_step(&mut policy, cfg, &specs)?;
        if policy.params().flatten().iter().any(|x| !x.is_finite()) {
            return Err(MetaError::Divergence { iteration: it });
        }
        rows.push(MetaRow {
            iteration: it,
            sample_return,
            eval_return: evaluate_pool(&policy, &pool)?,
        });
    }
    Ok((policy, rows, noise))
}

/// Columns `checkpoint,model_kind,mean_return,std_return,cov`.
pub fn write_noise_csv<W: Write>(rows: &[NoiseRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["checkpoint", "model_kind", "mean_return", "std_return", "cov"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.checkpoint.to_string(),
            r.model_kind.label().to_string(),
            r.stats.mean.to_string(),
            opt(r.stats.std),
            opt(r.stats.cov),
        ])?;
    }
    w.flush()?;
    Ok(())
}
