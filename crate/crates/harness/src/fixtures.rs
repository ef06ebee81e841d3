//! Stationary points used as test fixtures: trained and Newton-refined
//! differentiable points, and constructed boundary saddles.

use sosp_core::network::{forward, risk_and_gradient, PointContext, SignPattern};
use sosp_core::numerics::{pseudoinverse, Matrix};
use sosp_core::second_order::{assemble_so_qp, projected_spectrum_oracle};
use sosp_core::{Activation, Dataset, Dims, NetworkParams, Result, SquaredLoss};

use crate::adam::{adam_train, AdamConfig};
use crate::construct::{construct_boundary_fosp, ConstructError, Construction, ConstructionSpec, SlopePlacement};
use crate::datagen::{generate_dataset, init_params};

/// Least-squares refit of `(W2, b2)` on the current hidden features, which
/// makes the outer-layer gradient of the squared loss vanish.
pub fn fit_output_layer(params: &NetworkParams, data: &Dataset) -> Result<NetworkParams> {
    let dims = params.dims();
    let mut features = Matrix::zeros(data.len(), dims.hidden + 1);
    let mut targets = Matrix::zeros(data.len(), dims.output);
    for i in 0..data.len() {
        let f = forward(params, data.input(i))?;
        for k in 0..dims.hidden {
            features[(i, k)] = f.hidden[k];
        }
        features[(i, dims.hidden)] = 1.0;
        targets.set_row(i, &data.label(i).transpose());
    }
    let gram = features.transpose() * &features;
    let solution = pseudoinverse(&gram, 1e-12)? * features.transpose() * targets;
    let mut next = params.clone();
    for k in 0..dims.hidden {
        next.w2.set_column(k, &solution.row(k).transpose());
    }
    next.b2 = solution.row(dims.hidden).transpose();
    Ok(next)
}

/// Hessian of the risk by central differences of the exact gradient.
fn numerical_hessian(params: &NetworkParams, data: &Dataset, step: f64) -> Result<Matrix> {
    let dims = params.dims();
    let x = params.to_flat();
    let p = x.len();
    let mut h = Matrix::zeros(p, p);
    for j in 0..p {
        let mut up = x.clone();
        up[j] += step;
        let mut down = x.clone();
        down[j] -= step;
        let (_, gu) = risk_and_gradient(&NetworkParams::from_flat(dims, params.activation, &up)?, data, &SquaredLoss)?;
        let (_, gd) = risk_and_gradient(&NetworkParams::from_flat(dims, params.activation, &down)?, data, &SquaredLoss)?;
        h.set_column(j, &((gu - gd) / (2.0 * step)));
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Pseudoinverse Newton iterations on `grad R = 0`; returns the final point
/// and its gradient norm.
pub fn newton_polish(params: &NetworkParams, data: &Dataset, iterations: usize) -> Result<(NetworkParams, f64)> {
    let dims = params.dims();
    let mut current = params.clone();
    let (_, mut grad) = risk_and_gradient(&current, data, &SquaredLoss)?;
    for _ in 0..iterations {
        if grad.norm() <= 1e-13 {
            break;
        }
        let h = numerical_hessian(&current, data, 1e-5)?;
        let step = pseudoinverse(&h, 1e-9)? * &grad;
        let next = NetworkParams::from_flat(dims, current.activation, &(current.to_flat() - step))?;
        let (_, g) = risk_and_gradient(&next, data, &SquaredLoss)?;
        if g.norm() >= grad.norm() {
            break;
        }
        current = next;
        grad = g;
    }
    Ok((current, grad.norm()))
}

/// Smallest `|preactivation|` over all samples and units.
pub fn kink_distance(params: &NetworkParams, data: &Dataset) -> Result<f64> {
    let mut lowest = f64::INFINITY;
    for x in data.inputs() {
        let f = forward(params, x)?;
        lowest = f.preact.iter().fold(lowest, |a, v| a.min(v.abs()));
    }
    Ok(lowest)
}

/// A differentiable stationary point of a small squared-loss problem:
/// Adam from a random start, an output-layer refit, then Newton steps.
/// Returns `None` when the point ends up near a kink or the refinement stalls.
pub fn trained_fosp(dims: Dims, samples: usize, seed: u64) -> Result<Option<(NetworkParams, Dataset)>> {
    let data = generate_dataset(dims.input, dims.output, samples, seed.wrapping_mul(2))?;
    let start = init_params(dims, Activation::relu(), seed.wrapping_mul(2).wrapping_add(1))?;
    let cfg = AdamConfig {
        learning_rate: 1e-2,
        iterations: 3000,
        decay_period: 1000,
        decay_factor: 0.5,
        ..AdamConfig::default()
    };
    let trained = adam_train(&start, &data, &SquaredLoss, &cfg)?.params;
    let refit = fit_output_layer(&trained, &data)?;
    let (point, grad_norm) = newton_polish(&refit, &data, 30)?;
    let scale = risk_and_gradient(&point, &data, &SquaredLoss)?.0.max(1.0);
    if grad_norm > 1e-10 * scale || kink_distance(&point, &data)? < 1e-3 {
        return Ok(None);
    }
    Ok(Some((point, data)))
}

/// A constructed boundary stationary point (one sample on the kink of unit
/// 0, interior slope) whose all-zero-pattern quadratic form has a negative
/// eigenvalue on the constraint null space.
///
/// With a single output the first-order conditions cancel the curvature
/// coupling between `W2` and `W1`, so `dims.output` should be at least 2.
pub fn boundary_saddle(dims: Dims, samples: usize, seed: u64) -> std::result::Result<Construction, ConstructError> {
    let spec = ConstructionSpec::single(dims, samples, SlopePlacement::Interior, 2.0);
    let mut last = None;
    for attempt in 0..50u64 {
        let c = construct_boundary_fosp(&spec, seed.wrapping_mul(1000).wrapping_add(attempt))?;
        let ctx = PointContext::new(&c.params, &c.data, &SquaredLoss, 0.0, 1e-10)?;
        let qp = assemble_so_qp(&ctx, &SignPattern::zeros(&ctx.boundary), 1e-10)?;
        let spectrum = projected_spectrum_oracle(&qp.q, &qp.a, 1e-10)?;
        let lowest = spectrum.eigen.min().unwrap_or(0.0);
        if lowest < -1e-6 * qp.q_norm() {
            return Ok(c);
        }
        last = Some(lowest);
    }
    Err(ConstructError::ConstructionFailed(format!(
        "no indefinite reduced form found (last minimum eigenvalue {last:?})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sosp_core::first_order::outer_layer_gradient;

    #[test]
    fn refit_zeroes_outer_gradient() {
        let data = generate_dataset(3, 2, 15, 2).unwrap();
        let params = init_params(Dims::new(3, 2, 2), Activation::relu(), 5).unwrap();
        let fitted = fit_output_layer(&params, &data).unwrap();
        let ctx = PointContext::new(&fitted, &data, &SquaredLoss, 0.0, 1e-10).unwrap();
        assert!(outer_layer_gradient(&ctx).norm() < 1e-10);
    }

    #[test]
    fn saddle_has_negative_reduced_curvature() {
        let c = boundary_saddle(Dims::new(3, 2, 2), 16, 1).unwrap();
        let ctx = PointContext::new(&c.params, &c.data, &SquaredLoss, 0.0, 1e-10).unwrap();
        assert_eq!(ctx.boundary.total(), 1);
    }

    #[test]
    fn some_seed_gives_a_stationary_point() {
        let found = (0..10).find_map(|s| trained_fosp(Dims::new(2, 2, 1), 10, s).unwrap());
        let (params, data) = found.expect("a differentiable stationary point");
        let (_, g) = risk_and_gradient(&params, &data, &SquaredLoss).unwrap();
        assert!(g.norm() < 1e-9);
    }
}
