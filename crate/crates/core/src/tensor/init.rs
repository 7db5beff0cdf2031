//! Weight initialization.

use rand::Rng;

use super::{Tensor, TensorError};
use crate::Scalar;

/// Kaiming-uniform initialization in fan-in mode with ReLU gain:
/// samples are uniform on `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`.
pub fn kaiming_uniform<F: Scalar, R: Rng>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Result<Tensor<F>, TensorError> {
    assert!(fan_in > 0, "fan_in must be positive");
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_config(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape.to_vec(), data)
}
