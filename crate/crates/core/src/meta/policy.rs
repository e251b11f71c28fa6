use crate::hypernet::{dynamic_forward, DynamicSpec, DynamicWeights, HyperNet, InitScheme, PrimaryConfig};
use crate::nn::{Activation, Mlp, ParamSet};
use crate::rng::StreamRng;
use crate::tensor::{Graph, Result, Tensor, Var};
use serde::{Deserialize, Serialize};

const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_7; // ½ ln(2π)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetaPolicyKind {
    /// MLP on `[s, c]` with a free log-std vector.
    ContextMlp,
    /// Primary on `c` generates a dynamic network on `s` plus its log-std.
    HyperContext,
}

impl MetaPolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            MetaPolicyKind::ContextMlp => "context-mlp",
            MetaPolicyKind::HyperContext => "hyper-context",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaPolicyConfig {
    pub mlp_hidden: Vec<usize>,
    pub primary: PrimaryConfig,
    pub dynamic_hidden: usize,
    pub init: InitScheme,
}

impl Default for MetaPolicyConfig {
    fn default() -> Self {
        Self {
            mlp_hidden: vec![64, 64],
            primary: PrimaryConfig::desk(),
            dynamic_hidden: 64,
            init: InitScheme::Small,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Net {
    /// The log-std vector is the last entry of the MLP's parameter set.
    Mlp(Mlp),
    Hyper(HyperNet),
}

/// Gaussian policy `a ~ N(μ(s, c), diag(exp(2 log_std(c))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaPolicy {
    kind: MetaPolicyKind,
    n_s: usize,
    n_a: usize,
    context_dim: usize,
    net: Net,
}

/// Per-task mean function with weights already resolved for one context.
pub struct TaskActor<'a> {
    policy: &'a MetaPolicy,
    context: Vec<f64>,
    weights: Option<Vec<Tensor>>,
    log_std: Vec<f64>,
}

impl MetaPolicy {
    pub fn new(
        kind: MetaPolicyKind,
        n_s: usize,
        n_a: usize,
        context_dim: usize,
        cfg: &MetaPolicyConfig,
        rng: &mut StreamRng,
    ) -> Self {
        let net = match kind {
            MetaPolicyKind::ContextMlp => {
                let mut dims = vec![n_s + context_dim];
                dims.extend(&cfg.mlp_hidden);
                dims.push(n_a);
                let mut mlp = Mlp::new(&dims, Activation::Relu, Activation::Identity, rng);
                mlp.params_mut().push("log_std", Tensor::zeros(&[1, n_a]));
                Net::Mlp(mlp)
            }
            MetaPolicyKind::HyperContext => {
                let spec = DynamicSpec::single_hidden(n_s, cfg.dynamic_hidden, n_a).with_log_std();
                Net::Hyper(HyperNet::new(context_dim, cfg.primary.clone(), spec, cfg.init, rng))
            }
        };
        Self {
            kind,
            n_s,
            n_a,
            context_dim,
            net,
        }
    }

    pub fn kind(&self) -> MetaPolicyKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.n_s
    }

    pub fn action_dim(&self) -> usize {
        self.n_a
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn params(&self) -> &ParamSet {
        match &self.net {
            Net::Mlp(m) => m.params(),
            Net::Hyper(h) => h.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match &mut self.net {
            Net::Mlp(m) => m.params_mut(),
            Net::Hyper(h) => h.params_mut(),
        }
    }

    pub fn hypernet(&self) -> Option<&HyperNet> {
        match &self.net {
            Net::Hyper(h) => Some(h),
            Net::Mlp(_) => None,
        }
    }

    /// `(μ [N, n_a], log_std [1, n_a])` for states `[N, n_s]` under one
    /// context.
    pub fn dist(&self, g: &mut Graph, vars: &[Var], context: &[f64], states: Var) -> Result<(Var, Var)> {
        match &self.net {
            Net::Mlp(mlp) => {
                let n = g.value(states).rows();
                let rows = vec![context.to_vec(); n];
                let c = g.constant(Tensor::from_rows(&rows)?);
                let x = g.concat(&[states, c])?;
                let mu = mlp.forward(g, vars, x)?;
                Ok((mu, vars[vars.len() - 1]))
            }
            Net::Hyper(h) => {
                let z = g.constant(Tensor::row(context.to_vec()));
                let w = h.primary_forward(g, vars, z)?;
                let mu = dynamic_forward(g, h.spec(), &w, states)?;
                Ok((mu, w.log_std.expect("log-std head")))
            }
        }
    }

    pub fn actor(&self, context: &[f64]) -> Result<TaskActor<'_>> {
        match &self.net {
            Net::Mlp(m) => Ok(TaskActor {
                policy: self,
                context: context.to_vec(),
                weights: None,
                log_std: m.params().get(m.params().len() - 1).data().to_vec(),
            }),
            Net::Hyper(h) => {
                let mut groups = h.weights_for(context)?;
                let log_std = groups.pop().expect("log-std group");
                let weights = groups.into_iter().map(Tensor::row).collect();
                Ok(TaskActor {
                    policy: self,
                    context: context.to_vec(),
                    weights: Some(weights),
                    log_std,
                })
            }
        }
    }
}

/// `log N(a; μ, diag σ²)` per row, `[N, 1]`.
pub fn gaussian_log_prob(g: &mut Graph, mu: Var, log_std: Var, actions: Var) -> Result<Var> {
    let diff = g.sub(actions, mu)?;
    let neg = g.neg(log_std);
    let inv = g.exp(neg);
    let z = g.mul(diff, inv)?;
    let z2 = g.square(z)?;
    let half = g.scale(z2, -0.5);
    let lp = g.sub(half, log_std)?;
    let lp = g.add_scalar(lp, -HALF_LOG_TAU);
    Ok(g.sum_last(lp))
}

impl TaskActor<'_> {
    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Mean actions for states `[N, n_s]`.
    pub fn mean(&self, states: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(states.clone());
        let mu = match (&self.policy.net, &self.weights) {
            (Net::Mlp(mlp), _) => {
                let vars = mlp.params().bind(&mut g, false);
                let (mu, _) = self.policy.dist(&mut g, &vars, &self.context, x)?;
                mu
            }
            (Net::Hyper(h), Some(ws)) => {
                let vars: Vec<Var> = ws.iter().map(|t| g.constant(t.clone())).collect();
                let mut all = vars;
                all.push(g.constant(Tensor::row(self.log_std.clone())));
                let w = DynamicWeights::from_groups(h.spec(), &all, 1);
                dynamic_forward(&mut g, h.spec(), &w, x)?
            }
            (Net::Hyper(_), None) => unreachable!("hyper actor without weights"),
        };
        Ok(g.value(mu).clone())
    }
}
