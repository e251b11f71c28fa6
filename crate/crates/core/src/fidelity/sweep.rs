use super::lmse::{cosine_similarity, lmse_fit};
use crate::critic::Critic;
use crate::rl::{Env, RlError};
use crate::rng::{normal, stream_id, stream_rng, StreamRng};
use crate::tensor::Tensor;
use crate::trainer::{TrainError, Trainer};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsProtocol {
    /// Training steps between evaluations.
    pub eval_every: usize,
    pub n_states: usize,
    pub n_rollouts: usize,
    /// Perturbation std.
    pub sigma: f64,
    pub taus: Vec<f64>,
    /// Rollout horizon for each perturbed return.
    pub horizon: usize,
}

impl Default for CsProtocol {
    fn default() -> Self {
        Self {
            eval_every: 10_000,
            n_states: 15,
            n_rollouts: 15,
            sigma: 0.3,
            taus: vec![0.0, 0.25, 0.5, 0.75],
            horizon: 400,
        }
    }
}

/// One evaluation of the protocol on a set of states.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub step: usize,
    /// Per-state cosine; `None` where it is undefined.
    pub cs: Vec<Option<f64>>,
    /// Fraction of all states with `cs > τ`, per threshold.
    pub learnable_frac: Vec<f64>,
}

impl SweepRecord {
    pub fn from_cs(step: usize, cs: Vec<Option<f64>>, taus: &[f64]) -> Self {
        let n = cs.len() as f64;
        let learnable_frac = taus
            .iter()
            .map(|&t| cs.iter().filter(|c| matches!(c, Some(v) if *v > t)).count() as f64 / n)
            .collect();
        Self {
            step,
            cs,
            learnable_frac,
        }
    }

    /// Mean over defined states.
    pub fn mean_cs(&self) -> Option<f64> {
        let defined: Vec<f64> = self.cs.iter().flatten().copied().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }

    pub fn undefined(&self) -> usize {
        self.cs.iter().filter(|c| c.is_none()).count()
    }

    pub fn nonpositive_frac(&self) -> f64 {
        self.cs.iter().filter(|c| matches!(c, Some(v) if *v <= 0.0)).count() as f64 / self.cs.len() as f64
    }
}

/// Discounted returns of rollouts from `s` whose first actions are
/// `actions` and which then follow `policy`; all rollouts advance in
/// lockstep so the policy sees one batch per step.
pub fn perturbed_returns(
    env: &dyn Env,
    gamma: f64,
    s: &[f64],
    actions: &[Vec<f64>],
    policy: &dyn Fn(&Tensor) -> Tensor,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, RlError> {
    let n = actions.len();
    let mut states: Vec<Vec<f64>> = vec![s.to_vec(); n];
    let mut acts: Vec<Vec<f64>> = actions.to_vec();
    let mut returns = vec![0.0; n];
    let mut discount = 1.0;
    for step in 0..horizon {
        if step > 0 {
            let batch = Tensor::from_rows(&states).expect("uniform state width");
            let a = policy(&batch);
            acts = (0..n).map(|i| a.row_slice(i).to_vec()).collect();
        }
        for i in 0..n {
            let (next, r) = env.step(&states[i], &acts[i], rng);
            if !r.is_finite() || next.iter().any(|x| !x.is_finite()) {
                return Err(RlError::Divergence { step });
            }
            returns[i] += discount * r;
            states[i] = next;
        }
        discount *= gamma;
    }
    Ok(returns)
}

fn perturb(center: &[f64], n: usize, sigma: f64, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| center.iter().map(|c| c + sigma * normal(rng)).collect())
        .collect()
}

/// Per-state cosine between `critic_grad(s, a_μ)` and the LMSE gradient of
/// perturbed returns around the policy mean `a_μ`. Each state uses its own
/// stream `(seed, stream_id([tag, state index]))`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_states(
    protocol: &CsProtocol,
    env: &dyn Env,
    gamma: f64,
    states: &[Vec<f64>],
    policy: &dyn Fn(&Tensor) -> Tensor,
    critic_grad: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
    seed: u64,
    tag: u64,
) -> Result<Vec<Option<f64>>, TrainError> {
    let mut out = Vec::with_capacity(states.len());
    for (k, s) in states.iter().enumerate() {
        let mut rng = stream_rng(seed, stream_id(&[tag, k as u64]));
        let mean = policy(&Tensor::row(s.clone())).into_data();
        let actions = perturb(&mean, protocol.n_rollouts, protocol.sigma, &mut rng);
        let q = perturbed_returns(env, gamma, s, &actions, policy, protocol.horizon, &mut rng)?;
        let samples: Vec<(Vec<f64>, f64)> = actions.into_iter().zip(q).collect();
        let g_star = lmse_fit(&mean, &samples)?;
        out.push(cosine_similarity(&critic_grad(s, &mean), &g_star));
    }
    Ok(out)
}

/// Trains with `trainer` and, every `protocol.eval_every` steps, scores the
/// current critic on `n_states` states drawn uniformly from the replay
/// buffer.
pub fn cs_sweep<E: Env>(protocol: &CsProtocol, trainer: &mut Trainer<E>) -> Result<Vec<SweepRecord>, TrainError> {
    let seed = trainer.config().seed;
    let mut records = Vec::new();
    let mut hook = |t: &Trainer<E>| -> Result<(), TrainError> {
        let step = t.step_count();
        if protocol.eval_every == 0 || !step.is_multiple_of(protocol.eval_every) {
            return Ok(());
        }
        let mut pick = stream_rng(seed, stream_id(&[0xc5, step as u64]));
        let buf = t.buffer();
        let states: Vec<Vec<f64>> = (0..protocol.n_states)
            .map(|_| buf.get(pick.random_range(0..buf.len())).s.clone())
            .collect();
        let actor = t.actor();
        let policy = |s: &Tensor| actor.mean_actions(s).expect("actor input width");
        let critic = t.critic();
        let grad = |s: &[f64], a: &[f64]| critic.action_grad_autodiff(s, a).expect("critic input width");
        let cs = evaluate_states(protocol, t.env(), t.gamma(), &states, &policy, &grad, seed, step as u64)?;
        records.push(SweepRecord::from_cs(step, cs, &protocol.taus));
        Ok(())
    };
    trainer.run(&mut hook)?;
    Ok(records)
}

/// Cosine between the LMSE fit of the critic's own outputs around `a_μ`
/// and its parametric gradient, per state.
pub fn local_linearity_check(
    critic: &Critic,
    protocol: &CsProtocol,
    states: &[Vec<f64>],
    policy: &dyn Fn(&Tensor) -> Tensor,
    seed: u64,
) -> Vec<Option<f64>> {
    states
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut rng = stream_rng(seed, stream_id(&[0x11, k as u64]));
            let mean = policy(&Tensor::row(s.clone())).into_data();
            let actions = perturb(&mean, protocol.n_rollouts, protocol.sigma, &mut rng);
            let samples: Vec<(Vec<f64>, f64)> = actions
                .into_iter()
                .map(|a| {
                    let q = critic.q_value(s, &a).expect("critic input width");
                    (a, q)
                })
                .collect();
            let g_star = lmse_fit(&mean, &samples).ok()?;
            cosine_similarity(
                &critic.action_grad_autodiff(s, &mean).expect("critic input width"),
                &g_star,
            )
        })
        .collect()
}

/// Rows `step,state_idx,cs,learnable_frac@τ...`; undefined cosines are
/// left empty.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], taus: &[f64], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "state_idx".into(), "cs".into()];
    header.extend(taus.iter().map(|t| format!("learnable_frac@{t}")));
    w.write_record(&header)?;
    for r in records {
        for (k, cs) in r.cs.iter().enumerate() {
            let mut row = vec![
                r.step.to_string(),
                k.to_string(),
                cs.map(|c| c.to_string()).unwrap_or_default(),
            ];
            row.extend(r.learnable_frac.iter().map(|f| f.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
