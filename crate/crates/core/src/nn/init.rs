//! Weight initializers.

use crate::tensor::Tensor;
use rand::Rng;

/// `U(-bound, bound)` samples in the given shape.
pub fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = if bound == 0.0 {
        vec![0.0; n]
    } else {
        (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
    };
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

/// Bound of fan-in Kaiming-uniform: `gain * sqrt(3 / fan_in)`.
pub fn kaiming_uniform_bound(fan_in: usize, gain: f64) -> f64 {
    gain * (3.0 / fan_in as f64).sqrt()
}

/// Bound of the stock linear-layer initializer (`1 / sqrt(fan_in)`), used
/// for both weights and biases.
pub fn default_linear_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// Standard deviation of `U(-bound, bound)`.
pub fn uniform_std(bound: f64) -> f64 {
    bound / 3f64.sqrt()
}
