use super::{check_dim, Result, RlError};
use crate::rng::StreamRng;
use std::io::Write;

/// A fixed-horizon control problem. Implementations are cheap value
/// objects; all randomness comes from the caller's stream.
pub trait Env {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn gamma(&self) -> f64;
    fn reset(&self, rng: &mut StreamRng) -> Vec<f64>;
    /// Next state and the reward of taking `a` in `s`.
    fn step(&self, s: &[f64], a: &[f64], rng: &mut StreamRng) -> (Vec<f64>, f64);
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.transitions.iter().map(|t| t.r)
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards().sum()
    }

    /// `Σ γ^t r_t`.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        for r in self.transitions.iter().rev().map(|t| t.r) {
            acc = r + gamma * acc;
        }
        acc
    }

    /// Discounted reward-to-go at every step.
    pub fn returns_to_go(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut acc = 0.0;
        for (i, t) in self.transitions.iter().enumerate().rev() {
            acc = t.r + gamma * acc;
            out[i] = acc;
        }
        out
    }

    /// CSV dump with columns `step,s0..,a0..,r,done`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let (ns, na) = match self.transitions.first() {
            Some(t) => (t.s.len(), t.a.len()),
            None => (0, 0),
        };
        let mut header = vec!["step".to_string()];
        header.extend((0..ns).map(|i| format!("s{i}")));
        header.extend((0..na).map(|i| format!("a{i}")));
        header.push("r".into());
        header.push("done".into());
        w.write_record(&header)?;
        for (k, t) in self.transitions.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(t.s.iter().map(|x| x.to_string()));
            rec.extend(t.a.iter().map(|x| x.to_string()));
            rec.push(t.r.to_string());
            rec.push(u8::from(t.done).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Runs `policy` for `horizon` steps from a fresh reset.
pub fn rollout(
    env: &dyn Env,
    policy: &mut dyn FnMut(&[f64], &mut StreamRng) -> Vec<f64>,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    let s0 = env.reset(rng);
    rollout_from(env, s0, None, policy, horizon, rng)
}

/// Runs from a given state, optionally forcing the first action.
pub fn rollout_from(
    env: &dyn Env,
    s0: Vec<f64>,
    first_action: Option<&[f64]>,
    policy: &mut dyn FnMut(&[f64], &mut StreamRng) -> Vec<f64>,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    check_dim("initial state", env.state_dim(), s0.len())?;
    let mut s = s0;
    let mut transitions = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let a = match (step, first_action) {
            (0, Some(a)) => a.to_vec(),
            _ => policy(&s, rng),
        };
        check_dim("action", env.action_dim(), a.len())?;
        let (s_next, r) = env.step(&s, &a, rng);
        if !r.is_finite() || s_next.iter().any(|x| !x.is_finite()) {
            return Err(RlError::Divergence { step });
        }
        transitions.push(Transition {
            s: std::mem::replace(&mut s, s_next.clone()),
            a,
            r,
            s_next,
            done: step + 1 == horizon,
        });
    }
    Ok(Trajectory { transitions })
}
