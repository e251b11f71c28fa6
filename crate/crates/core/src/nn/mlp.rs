use super::init;
use super::param::ParamSet;
use crate::tensor::{Graph, Result, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at pre-activation `x` (zero at the ReLU kink).
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }
}

/// Hidden-layer layouts of the plain baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpPreset {
    Standard,
    Small,
    Large,
}

impl MlpPreset {
    pub fn hidden(self) -> Vec<usize> {
        match self {
            MlpPreset::Standard => vec![256, 256],
            MlpPreset::Small => vec![256],
            MlpPreset::Large => vec![2900, 2900],
        }
    }
}

/// Fully connected stack `x -> act(x W + b) -> ... -> out_act(x W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: ParamSet,
}

impl Mlp {
    /// Stock initialization: weights and biases `U(±1/sqrt(fan_in))`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let mut params = ParamSet::new();
        for (l, w) in dims.windows(2).enumerate() {
            let bound = init::default_linear_bound(w[0]);
            params.push(format!("l{l}.w"), init::uniform(rng, &[w[0], w[1]], bound));
            params.push(format!("l{l}.b"), init::uniform(rng, &[1, w[1]], bound));
        }
        Self {
            dims: dims.to_vec(),
            hidden,
            output,
            params,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn weight(&self, l: usize) -> &Tensor {
        self.params.get(2 * l)
    }

    pub fn bias(&self, l: usize) -> &Tensor {
        self.params.get(2 * l + 1)
    }

    /// `x` is `[N, dims[0]]`; `vars` come from `params().bind`.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layer_count() - 1;
        for l in 0..=last {
            let z = g.matmul(h, vars[2 * l])?;
            let z = g.add(z, vars[2 * l + 1])?;
            let act = if l == last { self.output } else { self.hidden };
            h = act.apply(g, z);
        }
        Ok(h)
    }

    /// Value-only evaluation on a batch.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &vars, xv)?;
        Ok(g.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn default_init_respects_fan_in_bound() {
        let m = Mlp::new(
            &[16, 8, 1],
            Activation::Relu,
            Activation::Identity,
            &mut stream_rng(0, 0),
        );
        let b0 = 0.25;
        assert!(m.weight(0).data().iter().all(|x| x.abs() <= b0));
        assert!(m.bias(0).data().iter().all(|x| x.abs() <= b0));
        let b1 = 1.0 / 8f64.sqrt();
        assert!(m.weight(1).data().iter().all(|x| x.abs() <= b1));
        assert_eq!(m.params().numel(), 16 * 8 + 8 + 8 + 1);
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        let mut m = Mlp::new(&[2, 2, 1], Activation::Relu, Activation::Tanh, &mut stream_rng(0, 0));
        // W0 = I, b0 = [0, -1], W1 = [1, 1]^T, b1 = 0
        m.params_mut().set_flat(&[1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 1.0, 1.0, 0.0]);
        let y = m.eval(&Tensor::row(vec![0.5, 0.5])).unwrap();
        assert!((y.data()[0] - 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn preset_layouts() {
        assert_eq!(MlpPreset::Small.hidden(), vec![256]);
        assert_eq!(MlpPreset::Standard.hidden(), vec![256, 256]);
        assert_eq!(MlpPreset::Large.hidden(), vec![2900, 2900]);
    }
}
