//! Synthetic data and random initial points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use sosp_core::numerics::{Matrix, Vector};
use sosp_core::{Activation, Dataset, Dims, NetworkParams, Result};

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `m` samples with inputs and labels iid standard normal.
pub fn generate_dataset(input_dim: usize, output_dim: usize, samples: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        inputs.push(normal_vec(&mut rng, input_dim));
        labels.push(normal_vec(&mut rng, output_dim));
    }
    Dataset::new(inputs, labels)
}

/// `W1 ~ N(0, 1/d_x)`, `W2 ~ N(0, 1/d_h)`, zero biases.
pub fn init_params(dims: Dims, activation: Activation, seed: u64) -> Result<NetworkParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = Normal::new(0.0, (1.0 / dims.input as f64).sqrt()).expect("positive variance");
    let second = Normal::new(0.0, (1.0 / dims.hidden as f64).sqrt()).expect("positive variance");
    let w1 = Matrix::from_fn(dims.hidden, dims.input, |_, _| rng.sample(first));
    let w2 = Matrix::from_fn(dims.output, dims.hidden, |_, _| rng.sample(second));
    NetworkParams::new(w1, Vector::zeros(dims.hidden), w2, Vector::zeros(dims.output), activation)
}
