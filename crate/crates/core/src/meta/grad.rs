use super::policy::{gaussian_log_prob, MetaPolicy};
use super::MetaError;
use crate::hypernet::{dynamic_forward, DynamicWeights};
use crate::rl::{Env, PointMass};
use crate::rng::{normals, stream_id, stream_rng};
use crate::tensor::{Graph, Tensor, Var};

/// A task together with the random stream its rollouts draw from.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub task: PointMass,
    pub stream: u64,
}

/// On-policy samples of one task, flattened over trajectories and steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    pub context: Vec<f64>,
    /// `[N, n_s]`
    pub states: Tensor,
    /// `[N, n_a]`, unclipped policy samples.
    pub actions: Tensor,
    /// `Â` per row.
    pub advantages: Vec<f64>,
    pub n_traj: usize,
    /// Mean undiscounted return per trajectory.
    pub mean_return: f64,
}

/// Rollout phase: inner samples feed adaptation, outer samples feed the
/// meta-gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Inner,
    Outer,
}

/// Discounted return-to-go minus the per-step mean over the task's
/// trajectories.
pub fn advantages(rewards: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let rtg: Vec<Vec<f64>> = rewards
        .iter()
        .map(|r| {
            let mut out = vec![0.0; r.len()];
            let mut acc = 0.0;
            for t in (0..r.len()).rev() {
                acc = r[t] + gamma * acc;
                out[t] = acc;
            }
            out
        })
        .collect();
    let horizon = rtg.iter().map(Vec::len).max().unwrap_or(0);
    let mut baseline = vec![0.0; horizon];
    let mut count = vec![0usize; horizon];
    for r in &rtg {
        for (t, v) in r.iter().enumerate() {
            baseline[t] += v;
            count[t] += 1;
        }
    }
    for (b, c) in baseline.iter_mut().zip(&count) {
        *b /= *c as f64;
    }
    rtg.into_iter()
        .map(|r| r.iter().enumerate().map(|(t, v)| v - baseline[t]).collect())
        .collect()
}

/// `n_traj` lockstep rollouts of the stochastic policy on one task.
pub fn collect(
    policy: &MetaPolicy,
    spec: &TaskSpec,
    n_traj: usize,
    seed: u64,
    phase: Phase,
) -> Result<TaskBatch, MetaError> {
    let env = &spec.task;
    let tag = match phase {
        Phase::Inner => 0,
        Phase::Outer => 1,
    };
    let mut rng = stream_rng(seed, stream_id(&[spec.stream, tag]));
    let actor = policy.actor(&env.context)?;
    let std: Vec<f64> = actor.log_std().iter().map(|l| l.exp()).collect();
    let (n_s, n_a) = (env.state_dim(), env.action_dim());
    let mut states: Vec<Vec<f64>> = (0..n_traj).map(|_| env.reset(&mut rng)).collect();
    let mut s_rows = Vec::with_capacity(n_traj * env.horizon());
    let mut a_rows = Vec::with_capacity(n_traj * env.horizon());
    let mut rewards = vec![Vec::with_capacity(env.horizon()); n_traj];
    let steps = if n_traj == 0 { 0 } else { env.horizon() };
    for _ in 0..steps {
        let mu = actor.mean(&Tensor::from_rows(&states)?)?;
        for (j, s) in states.iter_mut().enumerate() {
            let eps = normals(&mut rng, n_a);
            let a: Vec<f64> = (0..n_a).map(|k| mu.at(j, k) + std[k] * eps[k]).collect();
            let (next, r) = env.step(s, &a, &mut rng);
            s_rows.push(std::mem::replace(s, next));
            a_rows.push(a);
            rewards[j].push(r);
        }
    }
    let mean_return = rewards.iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / n_traj.max(1) as f64;
    let adv = advantages(&rewards, env.gamma());
    // rows were pushed step-major; reorder advantages to match
    let horizon = env.horizon();
    let advantages = (0..horizon * n_traj).map(|i| adv[i % n_traj][i / n_traj]).collect();
    Ok(TaskBatch {
        context: env.context.clone(),
        states: if s_rows.is_empty() {
            Tensor::zeros(&[0, n_s])
        } else {
            Tensor::from_rows(&s_rows)?
        },
        actions: if a_rows.is_empty() {
            Tensor::zeros(&[0, n_a])
        } else {
            Tensor::from_rows(&a_rows)?
        },
        advantages,
        n_traj,
        mean_return,
    })
}

/// `(1/n_traj) Σ Â log π(a | s, c)` on the tape.
pub fn task_surrogate(g: &mut Graph, vars: &[Var], policy: &MetaPolicy, batch: &TaskBatch) -> Result<Var, MetaError> {
    let s = g.constant(batch.states.clone());
    let (mu, log_std) = policy.dist(g, vars, &batch.context, s)?;
    surrogate_from_dist(g, batch, mu, log_std)
}

fn surrogate_from_dist(g: &mut Graph, batch: &TaskBatch, mu: Var, log_std: Var) -> Result<Var, MetaError> {
    let a = g.constant(batch.actions.clone());
    let lp = gaussian_log_prob(g, mu, log_std, a)?;
    let adv = g.constant(Tensor::new(vec![batch.advantages.len(), 1], batch.advantages.clone())?);
    let weighted = g.mul(lp, adv)?;
    let total = g.sum(weighted);
    Ok(g.scale(total, 1.0 / batch.n_traj as f64))
}

fn check_nonempty(batch: &TaskBatch) -> Result<(), MetaError> {
    if batch.n_traj == 0 || batch.advantages.is_empty() {
        Err(MetaError::EmptyBatch)
    } else {
        Ok(())
    }
}

/// `(1/n_traj) Σ_traj Σ_t Â_t ∇_φ log π_φ(a_t | s_t, c)`.
pub fn task_policy_gradient(policy: &MetaPolicy, batch: &TaskBatch) -> Result<Vec<f64>, MetaError> {
    check_nonempty(batch)?;
    let mut g = Graph::new();
    let vars = policy.params().bind(&mut g, true);
    let loss = task_surrogate(&mut g, &vars, policy, batch)?;
    g.backward(loss)?;
    Ok(policy.params().flat_grad(&g, &vars))
}

/// One inner ascent step from fresh inner-phase rollouts; `policy` is left
/// untouched.
pub fn adapt(
    policy: &MetaPolicy,
    spec: &TaskSpec,
    eta_inner: f64,
    n_traj: usize,
    seed: u64,
) -> Result<MetaPolicy, MetaError> {
    let mut adapted = policy.clone();
    if eta_inner != 0.0 {
        let batch = collect(policy, spec, n_traj, seed, Phase::Inner)?;
        let grad = task_policy_gradient(policy, &batch)?;
        adapted.params_mut().axpy(eta_inner, &grad);
    }
    Ok(adapted)
}

fn sorted(specs: &[TaskSpec]) -> Vec<&TaskSpec> {
    let key = |t: &TaskSpec| {
        let mut k = vec![t.stream];
        k.extend(t.task.context.iter().map(|c| c.to_bits()));
        k
    };
    let mut out: Vec<&TaskSpec> = specs.iter().collect();
    out.sort_by_key(|t| key(t));
    out
}

fn accumulate(acc: &mut [f64], g: &[f64]) {
    for (a, x) in acc.iter_mut().zip(g) {
        *a += x;
    }
}

/// First-order meta-gradient: adapt per task, re-collect at the adapted
/// parameters and sum the task gradients there. Tasks are reduced in a
/// fixed order, so the result does not depend on their listing order.
pub fn meta_gradient(
    policy: &MetaPolicy,
    specs: &[TaskSpec],
    eta_inner: f64,
    n_traj: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64), MetaError> {
    let mut acc = vec![0.0; policy.params().numel()];
    let mut ret = 0.0;
    for spec in sorted(specs) {
        let adapted = adapt(policy, spec, eta_inner, n_traj, seed)?;
        let batch = collect(&adapted, spec, n_traj, seed, Phase::Outer)?;
        accumulate(&mut acc, &task_policy_gradient(&adapted, &batch)?);
        ret += batch.mean_return;
    }
    Ok((acc, ret / specs.len().max(1) as f64))
}

/// Sum of task gradients at the current parameters, in listing order.
pub fn multi_task_gradient(policy: &MetaPolicy, batches: &[TaskBatch]) -> Result<Vec<f64>, MetaError> {
    let mut acc = vec![0.0; policy.params().numel()];
    for b in batches {
        accumulate(&mut acc, &task_policy_gradient(policy, b)?);
    }
    Ok(acc)
}

/// Gradient of the summed surrogate from a single reverse pass over all
/// tasks.
pub fn direct_multi_task_gradient(policy: &MetaPolicy, batches: &[TaskBatch]) -> Result<Vec<f64>, MetaError> {
    let mut g = Graph::new();
    let vars = policy.params().bind(&mut g, true);
    let mut terms = Vec::with_capacity(batches.len());
    for b in batches {
        check_nonempty(b)?;
        terms.push(task_surrogate(&mut g, &vars, policy, b)?);
    }
    let Some(&first) = terms.first() else {
        return Err(MetaError::EmptyBatch);
    };
    let mut total = first;
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    g.backward(total)?;
    Ok(policy.params().flat_grad(&g, &vars))
}

/// Disentangled form for hypernetwork policies: per task, the score sum in
/// dynamic-weight space `G_i = ∂L_i/∂w` is formed first and pulled back
/// through the primary once, `Σ_i (∂w(c_i)/∂φ)ᵀ G_i`.
pub fn factored_meta_gradient(policy: &MetaPolicy, batches: &[TaskBatch]) -> Result<Vec<f64>, MetaError> {
    let Some(net) = policy.hypernet() else {
        return Err(MetaError::WrongKind {
            op: "factored_meta_gradient",
            kind: policy.kind(),
        });
    };
    let mut acc = vec![0.0; policy.params().numel()];
    for b in batches {
        check_nonempty(b)?;
        // dynamic-weight space scores
        let groups = net.weights_for(&b.context)?;
        let mut g = Graph::new();
        let leaves: Vec<Var> = groups.iter().map(|w| g.param(Tensor::row(w.clone()))).collect();
        let w = DynamicWeights::from_groups(net.spec(), &leaves, 1);
        let s = g.constant(b.states.clone());
        let mu = dynamic_forward(&mut g, net.spec(), &w, s)?;
        let loss = surrogate_from_dist(&mut g, b, mu, w.log_std.expect("log-std head"))?;
        g.backward(loss)?;
        let scores: Vec<Tensor> = leaves.iter().map(|&v| g.grad_tensor(v)).collect();

        // vector-Jacobian product through the primary
        let mut g = Graph::new();
        let vars = net.params().bind(&mut g, true);
        let z = g.constant(Tensor::row(b.context.clone()));
        let w = net.primary_forward(&mut g, &vars, z)?;
        let mut total = None;
        for (v, score) in w.group_vars().into_iter().zip(scores) {
            let c = g.constant(score);
            let p = g.mul(v, c)?;
            let s = g.sum(p);
            total = Some(match total {
                None => s,
                Some(t) => g.add(t, s)?,
            });
        }
        g.backward(total.expect("at least one group"))?;
        accumulate(&mut acc, &net.params().flat_grad(&g, &vars));
    }
    Ok(acc)
}
