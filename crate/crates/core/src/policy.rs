//! Squashed actors for the off-policy trainers.

use crate::nn::{Activation, Mlp, ParamSet};
use crate::rng::{normals, StreamRng};
use crate::tensor::{Graph, Result, Tensor, Var};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// `a = scale * tanh(f(s))`.
    DeterministicTanh,
    /// `a = scale * tanh(μ(s) + σ(s) ε)`, `ε ~ N(0, I)`.
    GaussianReparam,
}

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_7; // ½ ln(2π)

#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    kind: PolicyKind,
    n_a: usize,
    scale: f64,
    net: Mlp,
}

impl Actor {
    pub fn new(kind: PolicyKind, n_s: usize, n_a: usize, hidden: &[usize], scale: f64, rng: &mut StreamRng) -> Self {
        let out = match kind {
            PolicyKind::DeterministicTanh => n_a,
            PolicyKind::GaussianReparam => 2 * n_a,
        };
        let mut dims = vec![n_s];
        dims.extend(hidden);
        dims.push(out);
        Self {
            kind,
            n_a,
            scale,
            net: Mlp::new(&dims, Activation::Relu, Activation::Identity, rng),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn action_dim(&self) -> usize {
        self.n_a
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn params(&self) -> &ParamSet {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        self.net.params_mut()
    }

    /// Actions `[N, n_a]` and, for the Gaussian kind, `log π(a|s)` `[N, 1]`.
    /// `eps` is ignored by the deterministic kind; `None` gives the mean.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], s: Var, eps: Option<Var>) -> Result<(Var, Option<Var>)> {
        let out = self.net.forward(g, vars, s)?;
        match self.kind {
            PolicyKind::DeterministicTanh => {
                let t = g.tanh(out);
                Ok((g.scale(t, self.scale), None))
            }
            PolicyKind::GaussianReparam => {
                let mu = g.slice(out, 0, self.n_a)?;
                let Some(eps) = eps else {
                    let t = g.tanh(mu);
                    return Ok((g.scale(t, self.scale), None));
                };
                let raw = g.slice(out, self.n_a, 2 * self.n_a)?;
                let log_std = g.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
                let std = g.exp(log_std);
                let noise = g.mul(std, eps)?;
                let u = g.add(mu, noise)?;
                let t = g.tanh(u);
                let a = g.scale(t, self.scale);
                // log N(u; μ, σ) - log |d a / d u|
                let e2 = g.square(eps)?;
                let e2 = g.scale(e2, -0.5);
                let gauss = g.sub(e2, log_std)?;
                let t2 = g.square(t)?;
                let one_minus = g.scale(t2, -1.0);
                let one_minus = g.add_scalar(one_minus, 1.0 + 1e-6);
                let jac = g.log(one_minus);
                let per = g.sub(gauss, jac)?;
                let lp = g.sum_last(per);
                let offset = -(self.n_a as f64) * (HALF_LOG_TAU + self.scale.ln());
                Ok((a, Some(g.add_scalar(lp, offset))))
            }
        }
    }

    pub fn mean_actions(&self, s: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.params().bind(&mut g, false);
        let sv = g.constant(s.clone());
        let (a, _) = self.forward(&mut g, &vars, sv, None)?;
        Ok(g.value(a).clone())
    }

    /// Action at `ε = 0`.
    pub fn mean_action(&self, s: &[f64]) -> Vec<f64> {
        self.mean_actions(&Tensor::row(s.to_vec()))
            .expect("actor input width")
            .into_data()
    }

    /// One stochastic action (the mean for deterministic actors).
    pub fn sample_action(&self, s: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        match self.kind {
            PolicyKind::DeterministicTanh => self.mean_action(s),
            PolicyKind::GaussianReparam => {
                let mut g = Graph::new();
                let vars = self.params().bind(&mut g, false);
                let sv = g.constant(Tensor::row(s.to_vec()));
                let ev = g.constant(Tensor::row(normals(rng, self.n_a)));
                let (a, _) = self.forward(&mut g, &vars, sv, Some(ev)).expect("actor input width");
                g.value(a).data().to_vec()
            }
        }
    }
}
