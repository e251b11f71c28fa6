use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered, named parameter tensors of one network.
///
/// Declaration order is significant: binding, flat gradients, optimizer
/// state and checkpoints all follow it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<NamedTensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.entries.push(NamedTensor {
            name: name.into(),
            tensor,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.entries[i].tensor
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].tensor
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].name
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedTensor> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NamedTensor> {
        self.entries.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    /// Puts every tensor on the tape, as gradient leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|e| g.leaf(e.tensor.clone(), trainable))
            .collect()
    }

    /// Gradients of bound leaves, concatenated in declaration order.
    pub fn flat_grad(&self, g: &Graph, vars: &[Var]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for (e, &v) in self.entries.iter().zip(vars) {
            match g.grad(v) {
                Some(d) => out.extend_from_slice(d),
                None => out.extend(std::iter::repeat_n(0.0, e.tensor.numel())),
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for e in &self.entries {
            out.extend_from_slice(e.tensor.data());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.numel(), "flat parameter length");
        let mut off = 0;
        for e in &mut self.entries {
            let n = e.tensor.numel();
            e.tensor.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// `self += step * direction` over the flat layout.
    pub fn axpy(&mut self, step: f64, direction: &[f64]) {
        assert_eq!(direction.len(), self.numel(), "direction length");
        let mut off = 0;
        for e in &mut self.entries {
            for x in e.tensor.data_mut() {
                *x += step * direction[off];
                off += 1;
            }
        }
    }

    /// Exponential blend `self = (1 - tau) * self + tau * online`.
    pub fn blend_from(&mut self, online: &ParamSet, tau: f64) {
        assert_eq!(self.len(), online.len(), "parameter sets differ");
        for (t, o) in self.entries.iter_mut().zip(&online.entries) {
            for (x, y) in t.tensor.data_mut().iter_mut().zip(o.tensor.data()) {
                *x = (1.0 - tau) * *x + tau * y;
            }
        }
    }

    /// Copy with every name prefixed by `prefix.`.
    pub fn prefixed(&self, prefix: &str) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| NamedTensor {
                    name: format!("{prefix}.{}", e.name),
                    tensor: e.tensor.clone(),
                })
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamSet) {
        self.entries.extend(other.entries);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::row(vec![0.0, 0.0]));
        p.push("b", Tensor::scalar(0.0));
        p
    }

    #[test]
    fn flat_round_trip() {
        let mut p = two();
        p.set_flat(&[1.0, 2.0, 3.0]);
        assert_eq!(p.flatten(), vec![1.0, 2.0, 3.0]);
        assert_eq!(p.numel(), 3);
        assert_eq!(p.find("b"), Some(1));
    }

    #[test]
    fn blend_rates() {
        let mut online = two();
        online.set_flat(&[1.0, 1.0, 1.0]);
        let mut target = two();
        target.blend_from(&online, 0.0);
        assert_eq!(target.flatten(), vec![0.0; 3]);
        target.blend_from(&online, 0.5);
        target.blend_from(&online, 0.5);
        assert_eq!(target.flatten(), vec![0.75; 3]);
        target.blend_from(&online, 1.0);
        assert_eq!(target.flatten(), online.flatten());
    }

    #[test]
    fn unreached_leaves_give_zero_gradient() {
        let p = two();
        let mut g = Graph::new();
        let v = p.bind(&mut g, true);
        let s = g.sum(v[0]);
        g.backward(s).unwrap();
        assert_eq!(p.flat_grad(&g, &v), vec![1.0, 1.0, 0.0]);
    }
}
