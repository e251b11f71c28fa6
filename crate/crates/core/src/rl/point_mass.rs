use super::rollout::Env;
use crate::rng::StreamRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    /// Reach a goal on the unit circle; context is the goal position.
    Goal,
    /// Move along the first axis in the direction given by a ±1 context.
    FwdBack,
}

impl TaskFamily {
    pub fn context_dim(self) -> usize {
        match self {
            TaskFamily::Goal => 2,
            TaskFamily::FwdBack => 1,
        }
    }

    pub fn sample_context(self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            TaskFamily::Goal => {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                vec![theta.cos(), theta.sin()]
            }
            TaskFamily::FwdBack => vec![if rng.random_bool(0.5) { 1.0 } else { -1.0 }],
        }
    }

    pub fn sample_tasks(self, n: usize, rng: &mut StreamRng) -> Vec<PointMass> {
        (0..n).map(|_| PointMass::new(self, self.sample_context(rng))).collect()
    }
}

/// 2-D point mass driven by a clipped velocity command.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMass {
    pub family: TaskFamily,
    pub context: Vec<f64>,
    pub horizon: usize,
    pub dt: f64,
}

impl PointMass {
    pub fn new(family: TaskFamily, context: Vec<f64>) -> Self {
        assert_eq!(context.len(), family.context_dim(), "context width");
        Self {
            family,
            context,
            horizon: 200,
            dt: 0.1,
        }
    }

    /// Best one-step action, used as a reference policy.
    pub fn optimal_action(&self, s: &[f64]) -> Vec<f64> {
        match self.family {
            TaskFamily::Goal => {
                let d = [self.context[0] - s[0], self.context[1] - s[1]];
                let scale = (d[0].abs().max(d[1].abs()) / self.dt).max(1.0);
                vec![d[0] / self.dt / scale, d[1] / self.dt / scale]
            }
            TaskFamily::FwdBack => vec![self.context[0].signum(), 0.0],
        }
    }
}

impl Env for PointMass {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        0.95
    }

    fn reset(&self, _rng: &mut StreamRng) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn step(&self, s: &[f64], a: &[f64], _rng: &mut StreamRng) -> (Vec<f64>, f64) {
        let v = [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)];
        let next = vec![s[0] + self.dt * v[0], s[1] + self.dt * v[1]];
        let r = match self.family {
            TaskFamily::Goal => -((next[0] - self.context[0]).powi(2) + (next[1] - self.context[1]).powi(2)).sqrt(),
            TaskFamily::FwdBack => self.context[0] * (next[0] - s[0]) / self.dt,
        };
        (next, r)
    }
}
