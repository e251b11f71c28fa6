use crate::tensor::{Graph, Result, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DynamicLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub gain: bool,
    pub relu: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKind {
    Weight,
    Bias,
    Gain,
    LogStd,
}

/// One contiguous block of generated parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightGroup {
    pub name: String,
    pub kind: GroupKind,
    /// Dynamic layer the group belongs to (the log-std head reports the
    /// number of layers).
    pub layer: usize,
    pub size: usize,
}

/// Shape of the generated network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynamicSpec {
    pub layers: Vec<DynamicLayer>,
    /// Extra state-independent output of width `out_dim` (policy log-std).
    pub log_std: bool,
}

impl DynamicSpec {
    /// `in -> hidden (ReLU) -> out`, gains on both layers.
    pub fn single_hidden(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self {
            layers: vec![
                DynamicLayer {
                    in_dim,
                    out_dim: hidden,
                    gain: true,
                    relu: true,
                },
                DynamicLayer {
                    in_dim: hidden,
                    out_dim,
                    gain: true,
                    relu: false,
                },
            ],
            log_std: false,
        }
    }

    pub fn with_log_std(mut self) -> Self {
        self.log_std = true;
        self
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty spec").out_dim
    }

    pub fn groups(&self) -> Vec<WeightGroup> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let n = l + 1;
            out.push(WeightGroup {
                name: format!("w{n}"),
                kind: GroupKind::Weight,
                layer: l,
                size: layer.in_dim * layer.out_dim,
            });
            out.push(WeightGroup {
                name: format!("b{n}"),
                kind: GroupKind::Bias,
                layer: l,
                size: layer.out_dim,
            });
            if layer.gain {
                out.push(WeightGroup {
                    name: format!("g{n}"),
                    kind: GroupKind::Gain,
                    layer: l,
                    size: layer.out_dim,
                });
            }
        }
        if self.log_std {
            out.push(WeightGroup {
                name: "log_std".into(),
                kind: GroupKind::LogStd,
                layer: self.layers.len(),
                size: self.out_dim(),
            });
        }
        out
    }

    /// Number of generated scalars `n_w`.
    pub fn param_count(&self) -> usize {
        self.groups().iter().map(|g| g.size).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerVars {
    /// `[B, in * out]`, row-major `in x out` per sample.
    pub w: Var,
    pub b: Var,
    pub g: Option<Var>,
}

/// Generated weights on a tape. `batch == 1` means one weight set shared by
/// every row of `x`; otherwise row `i` of `x` uses weight set `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicWeights {
    pub layers: Vec<LayerVars>,
    pub log_std: Option<Var>,
    pub batch: usize,
}

impl DynamicWeights {
    /// Group vars in [`DynamicSpec::groups`] order.
    pub fn group_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.w);
            out.push(l.b);
            if let Some(g) = l.g {
                out.push(g);
            }
        }
        if let Some(s) = self.log_std {
            out.push(s);
        }
        out
    }

    /// Reassembles weights from group vars listed in spec order.
    pub fn from_groups(spec: &DynamicSpec, vars: &[Var], batch: usize) -> Self {
        let mut it = vars.iter().copied();
        let mut layers = Vec::new();
        for layer in &spec.layers {
            let w = it.next().expect("weight group");
            let b = it.next().expect("bias group");
            let g = if layer.gain { it.next() } else { None };
            layers.push(LayerVars { w, b, g });
        }
        let log_std = if spec.log_std { it.next() } else { None };
        Self { layers, log_std, batch }
    }
}

/// `h = act((1 + g) ⊙ (x W) + b)` per layer.
pub fn dynamic_forward(g: &mut Graph, spec: &DynamicSpec, w: &DynamicWeights, x: Var) -> Result<Var> {
    let x_shape = g.value(x).shape().to_vec();
    if x_shape.len() != 2 || x_shape[1] != spec.in_dim() {
        return Err(TensorError::ShapeMismatch {
            op: "dynamic_forward",
            lhs: x_shape,
            rhs: vec![w.batch, spec.in_dim()],
        });
    }
    if w.batch != 1 && x_shape[0] != w.batch {
        return Err(TensorError::ShapeMismatch {
            op: "dynamic_forward",
            lhs: x_shape,
            rhs: vec![w.batch, spec.in_dim()],
        });
    }
    let mut h = x;
    for (layer, lv) in spec.layers.iter().zip(&w.layers) {
        let mut z = if w.batch == 1 {
            let m = g.reshape(lv.w, &[layer.in_dim, layer.out_dim])?;
            g.matmul(h, m)?
        } else {
            g.batched_vecmat(h, lv.w)?
        };
        if let Some(gain) = lv.g {
            let scale = g.add_scalar(gain, 1.0);
            z = g.mul(z, scale)?;
        }
        z = g.add(z, lv.b)?;
        h = if layer.relu { g.relu(z) } else { z };
    }
    Ok(h)
}
