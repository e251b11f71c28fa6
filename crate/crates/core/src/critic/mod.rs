//! Q-function compositions over `(s, a)` and their action gradients.

use crate::hypernet::{DynamicSpec, HyperNet, InitScheme, PrimaryConfig};
use crate::nn::{init, Activation, Mlp, ParamSet};
use crate::rng::StreamRng;
use crate::tensor::{Graph, Tensor, TensorError, Var};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(test)]
mod tests;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticKind {
    Linear,
    MlpConcat,
    /// Action is the meta-input, state the base input.
    AsHyper,
    /// State is the meta-input, action the base input.
    SaHyper,
}

impl CriticKind {
    pub fn is_hyper(self) -> bool {
        matches!(self, CriticKind::AsHyper | CriticKind::SaHyper)
    }

    pub fn label(self) -> &'static str {
        match self {
            CriticKind::Linear => "linear",
            CriticKind::MlpConcat => "mlp-concat",
            CriticKind::AsHyper => "as-hyper",
            CriticKind::SaHyper => "sa-hyper",
        }
    }
}

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("{op} is not defined for {kind:?} critics")]
    Unsupported { op: &'static str, kind: CriticKind },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, CriticError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    /// Hidden widths of the concatenation MLP.
    pub mlp_hidden: Vec<usize>,
    /// Hidden width of the dynamic network.
    pub dynamic_hidden: usize,
    pub primary: PrimaryConfig,
    pub init: InitScheme,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            mlp_hidden: vec![256, 256],
            dynamic_hidden: 256,
            primary: PrimaryConfig::desk(),
            init: InitScheme::Small,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Net {
    /// `w_s` `[n_s, 1]` and `w_a` `[n_a, 1]`, no bias.
    Linear(ParamSet),
    Mlp(Mlp),
    Hyper(HyperNet),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    kind: CriticKind,
    n_s: usize,
    n_a: usize,
    net: Net,
}

/// Per-sample quantities of one forward pass: effective layer matrices
/// restricted to the action path, and activation-derivative diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    pub q: f64,
    /// `mats[0]` maps the action input; later entries are full layers with
    /// any gain folded in.
    pub mats: Vec<DMatrix<f64>>,
    /// `lambdas[l]` is the diagonal after `mats[l]` (all ones for a linear
    /// output layer).
    pub lambdas: Vec<Vec<f64>>,
}

impl Critic {
    pub fn new(kind: CriticKind, n_s: usize, n_a: usize, cfg: &CriticConfig, rng: &mut StreamRng) -> Self {
        let net = match kind {
            CriticKind::Linear => {
                let bound = init::default_linear_bound(n_s + n_a);
                let mut p = ParamSet::new();
                p.push("w_s", init::uniform(rng, &[n_s, 1], bound));
                p.push("w_a", init::uniform(rng, &[n_a, 1], bound));
                Net::Linear(p)
            }
            CriticKind::MlpConcat => {
                let mut dims = vec![n_s + n_a];
                dims.extend(&cfg.mlp_hidden);
                dims.push(1);
                Net::Mlp(Mlp::new(&dims, Activation::Relu, Activation::Identity, rng))
            }
            CriticKind::SaHyper => Net::Hyper(HyperNet::new(
                n_s,
                cfg.primary.clone(),
                DynamicSpec::single_hidden(n_a, cfg.dynamic_hidden, 1),
                cfg.init,
                rng,
            )),
            CriticKind::AsHyper => Net::Hyper(HyperNet::new(
                n_a,
                cfg.primary.clone(),
                DynamicSpec::single_hidden(n_s, cfg.dynamic_hidden, 1),
                cfg.init,
                rng,
            )),
        };
        Self { kind, n_s, n_a, net }
    }

    /// Wraps an existing hypernetwork; `kind` picks which input is the
    /// meta-variable.
    pub fn from_hypernet(kind: CriticKind, n_s: usize, n_a: usize, net: HyperNet) -> Self {
        let (meta, base) = match kind {
            CriticKind::SaHyper => (n_s, n_a),
            CriticKind::AsHyper => (n_a, n_s),
            other => panic!("{other:?} is not a hypernetwork critic"),
        };
        assert_eq!(net.meta_dim(), meta, "meta-input width");
        assert_eq!(net.spec().in_dim(), base, "base-input width");
        Self {
            kind,
            n_s,
            n_a,
            net: Net::Hyper(net),
        }
    }

    pub fn kind(&self) -> CriticKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.n_s
    }

    pub fn action_dim(&self) -> usize {
        self.n_a
    }

    pub fn params(&self) -> &ParamSet {
        match &self.net {
            Net::Linear(p) => p,
            Net::Mlp(m) => m.params(),
            Net::Hyper(h) => h.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match &mut self.net {
            Net::Linear(p) => p,
            Net::Mlp(m) => m.params_mut(),
            Net::Hyper(h) => h.params_mut(),
        }
    }

    pub fn hypernet(&self) -> Option<&HyperNet> {
        match &self.net {
            Net::Hyper(h) => Some(h),
            _ => None,
        }
    }

    pub fn mlp(&self) -> Option<&Mlp> {
        match &self.net {
            Net::Mlp(m) => Some(m),
            _ => None,
        }
    }

    /// `Q(s, a)` as `[N, 1]`; `s` is `[N, n_s]`, `a` is `[N, n_a]`.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], s: Var, a: Var) -> Result<Var> {
        let q = match &self.net {
            Net::Linear(_) => {
                let qs = g.matmul(s, vars[0])?;
                let qa = g.matmul(a, vars[1])?;
                g.add(qs, qa)?
            }
            Net::Mlp(m) => {
                let x = g.concat(&[s, a])?;
                m.forward(g, vars, x)?
            }
            Net::Hyper(h) => match self.kind {
                CriticKind::SaHyper => h.forward(g, vars, s, a)?,
                _ => h.forward(g, vars, a, s)?,
            },
        };
        Ok(q)
    }

    pub fn q_batch(&self, s: &Tensor, a: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.params().bind(&mut g, false);
        let sv = g.constant(s.clone());
        let av = g.constant(a.clone());
        let q = self.forward(&mut g, &vars, sv, av)?;
        Ok(g.value(q).clone())
    }

    pub fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let q = self.q_batch(&Tensor::row(s.to_vec()), &Tensor::row(a.to_vec()))?;
        Ok(q.item()?)
    }

    /// Reverse-mode `∇_a Q` for every row of a batch, `[N, n_a]`.
    pub fn action_grad_batch(&self, s: &Tensor, a: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.params().bind(&mut g, false);
        let sv = g.constant(s.clone());
        let av = g.param(a.clone());
        let q = self.forward(&mut g, &vars, sv, av)?;
        let total = g.sum(q);
        g.backward(total)?;
        Ok(g.grad_tensor(av))
    }

    pub fn action_grad_autodiff(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let grad = self.action_grad_batch(&Tensor::row(s.to_vec()), &Tensor::row(a.to_vec()))?;
        Ok(grad.into_data())
    }

    /// Evaluates one sample outside the tape and records the layer
    /// matrices and activation derivatives along the action path.
    pub fn forward_cache(&self, s: &[f64], a: &[f64]) -> Result<ForwardCache> {
        match (&self.net, self.kind) {
            (Net::Mlp(m), _) => {
                let mut x: Vec<f64> = s.iter().chain(a).copied().collect();
                let mut mats = Vec::new();
                let mut lambdas = Vec::new();
                let last = m.layer_count() - 1;
                for l in 0..=last {
                    let w = m.weight(l);
                    let (rows, cols) = (w.shape()[0], w.shape()[1]);
                    let wm = DMatrix::from_row_slice(rows, cols, w.data());
                    let pre: Vec<f64> = (0..cols)
                        .map(|j| m.bias(l).data()[j] + (0..rows).map(|i| x[i] * wm[(i, j)]).sum::<f64>())
                        .collect();
                    let act = if l == last {
                        m.output_activation()
                    } else {
                        m.hidden_activation()
                    };
                    lambdas.push(pre.iter().map(|&p| act.derivative(p)).collect());
                    x = pre.iter().map(|&p| act.eval(p)).collect();
                    mats.push(if l == 0 {
                        wm.rows(self.n_s, self.n_a).into_owned()
                    } else {
                        wm
                    });
                }
                Ok(ForwardCache { q: x[0], mats, lambdas })
            }
            (Net::Hyper(h), CriticKind::SaHyper) => {
                let groups = h.weights_for(s)?;
                let spec = h.spec();
                let mut x = a.to_vec();
                let mut mats = Vec::new();
                let mut lambdas = Vec::new();
                let mut gi = 0;
                for layer in &spec.layers {
                    let w = &groups[gi];
                    let b = &groups[gi + 1];
                    gi += 2;
                    let gain: Vec<f64> = if layer.gain {
                        gi += 1;
                        groups[gi - 1].iter().map(|g| 1.0 + g).collect()
                    } else {
                        vec![1.0; layer.out_dim]
                    };
                    let wm = DMatrix::from_fn(layer.in_dim, layer.out_dim, |i, j| w[i * layer.out_dim + j] * gain[j]);
                    let pre: Vec<f64> = (0..layer.out_dim)
                        .map(|j| b[j] + (0..layer.in_dim).map(|i| x[i] * wm[(i, j)]).sum::<f64>())
                        .collect();
                    let act = if layer.relu {
                        Activation::Relu
                    } else {
                        Activation::Identity
                    };
                    lambdas.push(pre.iter().map(|&p| act.derivative(p)).collect());
                    x = pre.iter().map(|&p| act.eval(p)).collect();
                    mats.push(wm);
                }
                Ok(ForwardCache { q: x[0], mats, lambdas })
            }
            _ => Err(CriticError::Unsupported {
                op: "forward_cache",
                kind: self.kind,
            }),
        }
    }

    /// `∇_a Q = W^a Λ¹ (Π_l W^l Λ^l) W^L` from a cached forward pass.
    pub fn closed_form_from_cache(cache: &ForwardCache) -> Vec<f64> {
        let mut m = cache.mats[0].clone();
        for (l, lam) in cache.lambdas.iter().enumerate() {
            if l > 0 {
                m = &m * &cache.mats[l];
            }
            for (j, &d) in lam.iter().enumerate() {
                m.column_mut(j).scale_mut(d);
            }
        }
        m.column(0).iter().copied().collect()
    }

    pub fn action_grad_closed_form(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            CriticKind::MlpConcat | CriticKind::SaHyper => Ok(Self::closed_form_from_cache(&self.forward_cache(s, a)?)),
            kind => Err(CriticError::Unsupported {
                op: "action_grad_closed_form",
                kind,
            }),
        }
    }

    /// Numerical rank of `∂w(a)/∂a` (SVD, threshold `1e-10` relative to the
    /// largest singular value).
    pub fn as_hyper_jacobian_rank(&self, a: &[f64]) -> Result<usize> {
        let h = match (&self.net, self.kind) {
            (Net::Hyper(h), CriticKind::AsHyper) => h,
            (_, kind) => {
                return Err(CriticError::Unsupported {
                    op: "as_hyper_jacobian_rank",
                    kind,
                })
            }
        };
        let (_, jac) = h.weight_jacobian(a)?;
        Ok(numerical_rank(&jac, 1e-10))
    }
}

pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&x| x > rel_tol * top).count()
}
