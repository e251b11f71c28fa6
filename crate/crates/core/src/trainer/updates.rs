use super::{Algorithm, Result};
use crate::critic::Critic;
use crate::nn::{Adam, ParamSet};
use crate::policy::{Actor, PolicyKind};
use crate::rl::Batch;
use crate::rng::{normal, normals, StreamRng};
use crate::tensor::{Graph, Tensor, Var};

/// Anything that maps `(s, a)` batches to `[N, 1]` values on a tape.
pub trait QFunction {
    fn q_params(&self) -> &ParamSet;
    fn q_forward(&self, g: &mut Graph, vars: &[Var], s: Var, a: Var) -> Result<Var>;
}

impl QFunction for Critic {
    fn q_params(&self) -> &ParamSet {
        self.params()
    }

    fn q_forward(&self, g: &mut Graph, vars: &[Var], s: Var, a: Var) -> Result<Var> {
        Ok(self.forward(g, vars, s, a)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetSpec {
    pub gamma: f64,
    pub reward_scale: f64,
    pub algorithm: Algorithm,
    /// Absolute smoothing-noise std and clip (TD3).
    pub target_noise: f64,
    pub target_clip: f64,
    pub alpha_ent: f64,
}

/// Bootstrapped regression targets
/// `y = λ r + γ (min_i Q̄_i(s', a') - α log π(a'|s'))`, the entropy term
/// only for SAC.
pub fn td_targets(
    spec: &TargetSpec,
    actor: &Actor,
    targets: &[Critic; 2],
    batch: &Batch,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let n = batch.len();
    let n_a = actor.action_dim();
    let (a_next, log_pi) = match spec.algorithm {
        Algorithm::Td3 => {
            let mut a = actor.mean_actions(&batch.s_next)?;
            let bound = actor.scale();
            for x in a.data_mut() {
                let noise = (spec.target_noise * normal(rng)).clamp(-spec.target_clip, spec.target_clip);
                *x = (*x + noise).clamp(-bound, bound);
            }
            (a, None)
        }
        Algorithm::Sac => {
            let mut g = Graph::new();
            let vars = actor.params().bind(&mut g, false);
            let s = g.constant(batch.s_next.clone());
            let eps = g.constant(Tensor::matrix(n, n_a, normals(rng, n * n_a))?);
            let (a, lp) = actor.forward(&mut g, &vars, s, Some(eps))?;
            let lp = lp.expect("gaussian actor reports log-probabilities");
            (g.value(a).clone(), Some(g.value(lp).data().to_vec()))
        }
    };
    let q1 = targets[0].q_batch(&batch.s_next, &a_next)?;
    let q2 = targets[1].q_batch(&batch.s_next, &a_next)?;
    Ok((0..n)
        .map(|i| {
            let mut next = q1.data()[i].min(q2.data()[i]);
            if let Some(lp) = &log_pi {
                next -= spec.alpha_ent * lp[i];
            }
            spec.reward_scale * batch.r.data()[i] + spec.gamma * next
        })
        .collect())
}

/// `mean (Q(s,a) - y)²` and its flat gradient in the critic parameters.
pub fn critic_loss_grad(critic: &Critic, batch: &Batch, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let vars = critic.params().bind(&mut g, true);
    let s = g.constant(batch.s.clone());
    let a = g.constant(batch.a.clone());
    let q = critic.forward(&mut g, &vars, s, a)?;
    let yv = g.constant(Tensor::matrix(y.len(), 1, y.to_vec())?);
    let d = g.sub(q, yv)?;
    let d2 = g.square(d)?;
    let loss = g.mean(d2);
    g.backward(loss)?;
    Ok((g.value(loss).item()?, critic.params().flat_grad(&g, &vars)))
}

/// Off-policy surrogate `mean_s [Q(s, μ(ε|s)) - α log π]` with critic
/// parameters held constant. With several critics the elementwise minimum
/// is used. Returns the surrogate, its flat gradient in the actor
/// parameters, and the ReLU pattern of the tape.
pub fn actor_surrogate(
    actor: &Actor,
    critics: &[&dyn QFunction],
    s: &Tensor,
    eps: Option<&Tensor>,
    alpha_ent: f64,
) -> Result<(f64, Vec<f64>, Vec<bool>)> {
    let mut g = Graph::new();
    let vars = actor.params().bind(&mut g, true);
    let sv = g.constant(s.clone());
    let ev = eps.map(|e| g.constant(e.clone()));
    let (a, log_pi) = actor.forward(&mut g, &vars, sv, ev)?;
    let mut q: Option<Var> = None;
    for c in critics {
        let cv = c.q_params().bind(&mut g, false);
        let qi = c.q_forward(&mut g, &cv, sv, a)?;
        q = Some(match q {
            None => qi,
            // min(x, y) = x - relu(x - y)
            Some(prev) => {
                let d = g.sub(prev, qi)?;
                let r = g.relu(d);
                g.sub(prev, r)?
            }
        });
    }
    let mut per = q.expect("at least one critic");
    if let Some(lp) = log_pi {
        let ent = g.scale(lp, alpha_ent);
        per = g.sub(per, ent)?;
    }
    let surrogate = g.mean(per);
    g.backward(surrogate)?;
    Ok((
        g.value(surrogate).item()?,
        actor.params().flat_grad(&g, &vars),
        g.relu_signature(),
    ))
}

/// One ascent step on the surrogate; returns its pre-step value.
pub fn actor_step(
    actor: &mut Actor,
    opt: &mut Adam,
    critics: &[&dyn QFunction],
    s: &Tensor,
    alpha_ent: f64,
    rng: &mut StreamRng,
) -> Result<f64> {
    let eps = match actor.kind() {
        PolicyKind::DeterministicTanh => None,
        PolicyKind::GaussianReparam => {
            let (n, n_a) = (s.rows(), actor.action_dim());
            Some(Tensor::matrix(n, n_a, normals(rng, n * n_a))?)
        }
    };
    let (value, mut grad, _) = actor_surrogate(actor, critics, s, eps.as_ref(), alpha_ent)?;
    for x in &mut grad {
        *x = -*x;
    }
    opt.step(actor.params_mut(), &grad);
    Ok(value)
}
