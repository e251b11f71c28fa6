use super::param::ParamSet;

/// Adam over the flat layout of one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, numel: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; numel],
            v: vec![0.0; numel],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One descent step on `params` given the flat gradient of the loss.
    pub fn step(&mut self, params: &mut ParamSet, grad: &[f64]) {
        assert_eq!(grad.len(), self.m.len(), "gradient length");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut i = 0;
        for e in params.iter_mut() {
            for x in e.tensor.data_mut() {
                let gi = grad[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * gi;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * gi * gi;
                let mh = self.m[i] / c1;
                let vh = self.v[i] / c2;
                *x -= self.lr * mh / (vh.sqrt() + self.eps);
                i += 1;
            }
        }
    }
}
