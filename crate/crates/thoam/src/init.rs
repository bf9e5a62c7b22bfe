use rand::Rng;

use crate::tensor::Tensor;

/// Seeded uniform initialization in `[-sqrt(1/fan_in), +sqrt(1/fan_in)]`.
pub(crate) fn uniform<R: Rng>(rng: &mut R, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data)
        .expect("generated data matches shape")
        .requires_grad(true)
}

/// Zero-initialized trainable tensor (biases).
pub(crate) fn zeros(shape: Vec<usize>) -> Tensor {
    Tensor::zeros(shape).requires_grad(true)
}
