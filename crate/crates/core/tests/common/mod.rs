#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sosp_core::numerics::{Matrix, Vector};
use sosp_core::{Activation, Dataset, Dims, NetworkParams, Perturbation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn random_params(rng: &mut ChaCha8Rng, dims: Dims, activation: Activation) -> NetworkParams {
    NetworkParams::new(
        gaussian_mat(rng, dims.hidden, dims.input),
        gaussian_vec(rng, dims.hidden),
        gaussian_mat(rng, dims.output, dims.hidden),
        gaussian_vec(rng, dims.output),
        activation,
    )
    .unwrap()
}

pub fn random_data(rng: &mut ChaCha8Rng, dx: usize, dy: usize, m: usize) -> Dataset {
    let inputs = (0..m).map(|_| gaussian_vec(rng, dx)).collect();
    let labels = (0..m).map(|_| gaussian_vec(rng, dy)).collect();
    Dataset::new(inputs, labels).unwrap()
}

pub fn random_direction(rng: &mut ChaCha8Rng, dims: Dims) -> Perturbation {
    let flat = gaussian_vec(rng, dims.param_count());
    let flat = &flat / flat.norm();
    Perturbation::from_flat(dims, &flat).unwrap()
}

/// Shifts `b1[k]` so that sample `i` sits exactly on the kink of unit `k`.
pub fn place_on_boundary(params: &mut NetworkParams, data: &Dataset, k: usize, i: usize) {
    params.b1[k] = -(&params.w1 * data.input(i))[k];
}

/// Smallest `|pre|` over entries that are not on a boundary.
pub fn min_off_boundary_preact(params: &NetworkParams, data: &Dataset) -> f64 {
    let mut lowest = f64::INFINITY;
    for i in 0..data.len() {
        let pre = &params.w1 * data.input(i) + &params.b1;
        for v in pre.iter() {
            if *v != 0.0 {
                lowest = lowest.min(v.abs());
            }
        }
    }
    lowest
}
