use super::dynamic::{dynamic_forward, DynamicSpec, DynamicWeights, GroupKind};
use crate::nn::{init, ParamSet};
use crate::tensor::{Graph, Result, Tensor, TensorError, Var};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Stage widths of the primary trunk; each stage is a linear up-scale
/// followed by `blocks` pre-activation residual blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimaryConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

fn default_blocks() -> usize {
    2
}

impl PrimaryConfig {
    pub fn desk() -> Self {
        Self {
            widths: vec![64, 128, 256],
            blocks: 2,
        }
    }

    pub fn full() -> Self {
        Self {
            widths: vec![256, 512, 1024],
            blocks: 2,
        }
    }

    pub fn latent(&self) -> usize {
        *self.widths.last().expect("at least one stage")
    }
}

impl Default for PrimaryConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Small-scale scheme: trunk Kaiming-uniform with gain `1/sqrt(12)` and
    /// zero biases; heads `U(±0.05)` for the first dynamic layer,
    /// `U(±0.008)` for later layers, `U(±0.001)` for the log-std head.
    Small,
    /// Stock linear init `U(±1/sqrt(fan_in))` everywhere.
    Default,
}

pub(crate) const TRUNK_GAIN: f64 = 0.288_675_134_594_812_9; // 1/sqrt(12)
pub(crate) const HEAD_FIRST: f64 = 0.05;
pub(crate) const HEAD_LATER: f64 = 0.008;
pub(crate) const HEAD_LOG_STD: f64 = 0.001;

#[derive(Clone, Debug, PartialEq)]
struct Stage {
    up: usize,
    blocks: Vec<[usize; 2]>,
}

/// Primary network plus the spec of the dynamic network it parameterizes.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperNet {
    meta_dim: usize,
    config: PrimaryConfig,
    spec: DynamicSpec,
    params: ParamSet,
    stages: Vec<Stage>,
    heads: Vec<usize>,
}

impl HyperNet {
    pub fn new(
        meta_dim: usize,
        config: PrimaryConfig,
        spec: DynamicSpec,
        scheme: InitScheme,
        rng: &mut impl Rng,
    ) -> Self {
        let mut params = ParamSet::new();
        let mut stages = Vec::new();
        let linear = |params: &mut ParamSet, name: String, fan_in: usize, fan_out: usize, rng: &mut _| {
            let (wb, bb) = match scheme {
                InitScheme::Small => (init::kaiming_uniform_bound(fan_in, TRUNK_GAIN), 0.0),
                InitScheme::Default => {
                    let b = init::default_linear_bound(fan_in);
                    (b, b)
                }
            };
            let w = params.push(format!("{name}.w"), init::uniform(rng, &[fan_in, fan_out], wb));
            params.push(format!("{name}.b"), init::uniform(rng, &[1, fan_out], bb));
            w
        };
        let mut prev = meta_dim;
        for (s, &width) in config.widths.iter().enumerate() {
            let up = linear(&mut params, format!("stage{s}.up"), prev, width, rng);
            let blocks = (0..config.blocks)
                .map(|k| {
                    [
                        linear(&mut params, format!("stage{s}.res{k}.fc1"), width, width, rng),
                        linear(&mut params, format!("stage{s}.res{k}.fc2"), width, width, rng),
                    ]
                })
                .collect();
            stages.push(Stage { up, blocks });
            prev = width;
        }
        let latent = config.latent();
        let mut heads = Vec::new();
        for group in spec.groups() {
            let (wb, bb) = match scheme {
                InitScheme::Small => {
                    let b = match group.kind {
                        GroupKind::LogStd => HEAD_LOG_STD,
                        _ if group.layer == 0 => HEAD_FIRST,
                        _ => HEAD_LATER,
                    };
                    (b, 0.0)
                }
                InitScheme::Default => {
                    let b = init::default_linear_bound(latent);
                    (b, b)
                }
            };
            let name = format!("head.{}", group.name);
            let w = params.push(format!("{name}.w"), init::uniform(rng, &[latent, group.size], wb));
            params.push(format!("{name}.b"), init::uniform(rng, &[1, group.size], bb));
            heads.push(w);
        }
        Self {
            meta_dim,
            config,
            spec,
            params,
            stages,
            heads,
        }
    }

    pub fn meta_dim(&self) -> usize {
        self.meta_dim
    }

    pub fn config(&self) -> &PrimaryConfig {
        &self.config
    }

    pub fn spec(&self) -> &DynamicSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Parameter indices of the trunk (everything before the heads).
    pub fn trunk_len(&self) -> usize {
        self.heads[0]
    }

    /// Parameter index of each head's weight matrix, in group order; the
    /// bias follows it.
    pub fn head_indices(&self) -> &[usize] {
        &self.heads
    }

    /// Trunk output for `z` of shape `[B, meta_dim]`.
    pub fn latent(&self, g: &mut Graph, vars: &[Var], z: Var) -> Result<Var> {
        let shape = g.value(z).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.meta_dim {
            return Err(TensorError::ShapeMismatch {
                op: "primary_forward",
                lhs: shape,
                rhs: vec![1, self.meta_dim],
            });
        }
        let lin = |g: &mut Graph, x: Var, i: usize| -> Result<Var> {
            let y = g.matmul(x, vars[i])?;
            g.add(y, vars[i + 1])
        };
        let mut h = z;
        for stage in &self.stages {
            h = lin(g, h, stage.up)?;
            for &[fc1, fc2] in &stage.blocks {
                let r = g.relu(h);
                let r = lin(g, r, fc1)?;
                let r = g.relu(r);
                let r = lin(g, r, fc2)?;
                h = g.add(h, r)?;
            }
        }
        Ok(h)
    }

    /// `w_θ(z)`: one weight set per row of `z`.
    pub fn primary_forward(&self, g: &mut Graph, vars: &[Var], z: Var) -> Result<DynamicWeights> {
        let batch = g.value(z).rows();
        let h = self.latent(g, vars, z)?;
        let mut groups = Vec::with_capacity(self.heads.len());
        for &i in &self.heads {
            let y = g.matmul(h, vars[i])?;
            groups.push(g.add(y, vars[i + 1])?);
        }
        Ok(DynamicWeights::from_groups(&self.spec, &groups, batch))
    }

    /// `f_{w(z)}(x)`. `z` is either one row shared by all of `x` or one row
    /// per row of `x`.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], z: Var, x: Var) -> Result<Var> {
        let w = self.primary_forward(g, vars, z)?;
        dynamic_forward(g, &self.spec, &w, x)
    }

    /// Generated parameter values for a single meta-input, grouped in spec
    /// order.
    pub fn weights_for(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let zv = g.constant(Tensor::row(z.to_vec()));
        let w = self.primary_forward(&mut g, &vars, zv)?;
        Ok(w.group_vars().into_iter().map(|v| g.value(v).data().to_vec()).collect())
    }

    /// Generated weights `w(z)` (flat, spec order) and their Jacobian
    /// `∂w/∂z` of shape `[n_w, meta_dim]`, by forward-mode propagation.
    pub fn weight_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        if z.len() != self.meta_dim {
            return Err(TensorError::ShapeMismatch {
                op: "weight_jacobian",
                lhs: vec![1, z.len()],
                rhs: vec![1, self.meta_dim],
            });
        }
        let mat = |i: usize| {
            let t = self.params.get(i);
            DMatrix::from_row_slice(t.shape()[0], t.shape()[1], t.data())
        };
        let bias = |i: usize| nalgebra::DVector::from_row_slice(self.params.get(i + 1).data());
        // Column vector h and tangent dh = ∂h/∂z.
        let mut h = nalgebra::DVector::from_row_slice(z);
        let mut dh = DMatrix::<f64>::identity(self.meta_dim, self.meta_dim);
        let linear = |h: &nalgebra::DVector<f64>, dh: &DMatrix<f64>, i: usize| {
            let wt = mat(i).transpose();
            (&wt * h + bias(i), &wt * dh)
        };
        let relu = |h: &nalgebra::DVector<f64>, dh: &DMatrix<f64>| {
            let mut r = h.clone();
            let mut dr = dh.clone();
            for k in 0..h.len() {
                if h[k] <= 0.0 {
                    r[k] = 0.0;
                    dr.row_mut(k).fill(0.0);
                }
            }
            (r, dr)
        };
        for stage in &self.stages {
            (h, dh) = linear(&h, &dh, stage.up);
            for &[fc1, fc2] in &stage.blocks {
                let (r, dr) = relu(&h, &dh);
                let (r, dr) = linear(&r, &dr, fc1);
                let (r, dr) = relu(&r, &dr);
                let (r, dr) = linear(&r, &dr, fc2);
                h += r;
                dh += dr;
            }
        }
        let n_w = self.spec.param_count();
        let mut w = Vec::with_capacity(n_w);
        let mut jac = DMatrix::<f64>::zeros(n_w, self.meta_dim);
        let mut row = 0;
        for &i in &self.heads {
            let (y, dy) = linear(&h, &dh, i);
            w.extend(y.iter());
            jac.rows_mut(row, y.len()).copy_from(&dy);
            row += y.len();
        }
        Ok((w, jac))
    }
}
