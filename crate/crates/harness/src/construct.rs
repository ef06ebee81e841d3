//! Points with exact boundary samples that pass the first-order tests.
//!
//! Weights and inputs are drawn from a coarse dyadic grid so that a sample
//! can be put exactly on a unit's kink: after solving for its last
//! coordinate, every preactivation is computed without rounding. Labels are
//! then chosen so the per-sample loss gradients lie in the null space of the
//! stationarity conditions, with the boundary slopes fixed in advance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sosp_core::numerics::{nullspace_basis, rank, Matrix, Vector};
use sosp_core::{Activation, Dataset, Dims, NetworkParams};

use sosp_core::network::forward;

#[derive(Debug, thiserror::Error)]
pub enum ConstructError {
    #[error("construction failed: {0}")]
    ConstructionFailed(String),
    #[error(transparent)]
    Core(#[from] sosp_core::Error),
}

/// Where the optimal boundary slope `s*` of a boundary sample should land.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopePlacement {
    /// Strictly inside the slope box, at least a tenth of its width from either end.
    Interior,
    /// `s* = s_plus`: the `+1` ray is flat.
    Upper,
    /// `s* = s_minus`: the `-1` ray is flat.
    Lower,
    /// `W2[:,k]^T grad_i = 0`: both rays are flat.
    DoublyFlat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub unit: usize,
    pub placement: SlopePlacement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSpec {
    pub dims: Dims,
    pub samples: usize,
    /// One entry per boundary sample; samples `0..boundary.len()` are used in order.
    pub boundary: Vec<BoundarySpec>,
    /// Root-mean-square size of the loss gradients; zero gives a perfect fit.
    pub residual_scale: f64,
    pub activation: Activation,
}

impl ConstructionSpec {
    /// One boundary sample on unit 0 with the given placement.
    pub fn single(dims: Dims, samples: usize, placement: SlopePlacement, residual_scale: f64) -> Self {
        Self {
            dims,
            samples,
            boundary: vec![BoundarySpec { unit: 0, placement }],
            residual_scale,
            activation: Activation::relu(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Construction {
    pub params: NetworkParams,
    pub data: Dataset,
    /// Intended slope per boundary sample (`NaN` for doubly-flat samples).
    pub s_star: Vec<f64>,
    /// Boundary samples per unit.
    pub boundary: Vec<Vec<usize>>,
}

fn dyadic(rng: &mut ChaCha8Rng, half_range: i32, denominator: f64) -> f64 {
    f64::from(rng.random_range(-half_range..=half_range)) / denominator
}

const ATTEMPTS: usize = 200;

/// Squared-loss point with the requested boundary samples at which the
/// outer layer is stationary and zero lies in every unit's subdifferential.
pub fn construct_boundary_fosp(spec: &ConstructionSpec, seed: u64) -> Result<Construction, ConstructError> {
    let dims = spec.dims;
    dims.validate()?;
    if spec.boundary.len() > spec.samples {
        return Err(ConstructError::ConstructionFailed("more boundary samples than samples".into()));
    }
    if spec.boundary.iter().any(|b| b.unit >= dims.hidden) {
        return Err(ConstructError::ConstructionFailed("boundary unit out of range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::new();
    for _ in 0..ATTEMPTS {
        match attempt(spec, &mut rng) {
            Ok(c) => return Ok(c),
            Err(ConstructError::ConstructionFailed(reason)) => last = reason,
            Err(e) => return Err(e),
        }
    }
    Err(ConstructError::ConstructionFailed(format!("gave up after {ATTEMPTS} attempts: {last}")))
}

fn attempt(spec: &ConstructionSpec, rng: &mut ChaCha8Rng) -> Result<Construction, ConstructError> {
    let dims = spec.dims;
    let (dx, dh, dy, m) = (dims.input, dims.hidden, dims.output, spec.samples);
    let act = spec.activation;
    let fail = |s: &str| Err(ConstructError::ConstructionFailed(s.to_string()));

    // the last input weight of every unit is +-1/2 or +-1 so that solving for
    // the last input coordinate is exact
    let mut w1 = Matrix::from_fn(dh, dx, |_, _| dyadic(rng, 16, 8.0));
    for k in 0..dh {
        let mag = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
        w1[(k, dx - 1)] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    let b1 = Vector::from_fn(dh, |_, _| dyadic(rng, 16, 8.0));
    let w2 = Matrix::from_fn(dy, dh, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b2 = Vector::from_fn(dy, |_, _| rng.sample::<f64, _>(StandardNormal));
    let params = NetworkParams::new(w1, b1, w2, b2, act)?;

    let mut inputs: Vec<Vector> = (0..m).map(|_| Vector::from_fn(dx, |_, _| dyadic(rng, 32, 16.0))).collect();
    let mut boundary = vec![Vec::new(); dh];
    for (i, b) in spec.boundary.iter().enumerate() {
        let k = b.unit;
        let x = &mut inputs[i];
        let partial: f64 = (0..dx - 1).map(|j| params.w1[(k, j)] * x[j]).sum::<f64>() + params.b1[k];
        x[dx - 1] = -partial / params.w1[(k, dx - 1)];
        boundary[k].push(i);
    }
    let pre: Vec<Vector> = inputs.iter().map(|x| &params.w1 * x + &params.b1).collect();
    for (i, p) in pre.iter().enumerate() {
        for k in 0..dh {
            let on = boundary[k].contains(&i);
            if on && p[k] != 0.0 {
                return fail("boundary preactivation is not exactly zero");
            }
            if !on && p[k].abs() < 1e-3 {
                return fail("sample too close to a kink");
            }
        }
    }
    let augmented: Vec<Vector> = inputs
        .iter()
        .map(|x| Vector::from_fn(dx + 1, |j, _| if j < dx { x[j] } else { 1.0 }))
        .collect();
    for idx in &boundary {
        if idx.len() > dx {
            return fail("too many boundary samples on one unit");
        }
        if !idx.is_empty() {
            let cols: Vec<Vector> = idx.iter().map(|&i| augmented[i].clone()).collect();
            if rank(&Matrix::from_columns(&cols), 1e-10)? < cols.len() {
                return fail("boundary inputs are dependent");
            }
        }
    }

    let (lo, hi) = (act.lower(), act.upper());
    let width = hi - lo;
    let s_star: Vec<f64> = spec
        .boundary
        .iter()
        .map(|b| match b.placement {
            SlopePlacement::Interior => lo + width * rng.random_range(0.2..0.8),
            SlopePlacement::Upper => hi,
            SlopePlacement::Lower => lo,
            SlopePlacement::DoublyFlat => f64::NAN,
        })
        .collect();
    let forwards: Vec<_> = inputs.iter().map(|x| forward(&params, x)).collect::<Result<_, _>>()?;

    let residuals = if spec.residual_scale == 0.0 {
        if spec.boundary.iter().any(|b| b.placement != SlopePlacement::DoublyFlat) {
            return Err(ConstructError::ConstructionFailed(
                "a perfect fit makes every boundary sample doubly flat".into(),
            ));
        }
        vec![Vector::zeros(dy); m]
    } else {
        // unknown r = (r_1, ..., r_m), r_i in R^dy, r_i = grad of loss i
        let unknowns = m * dy;
        let mut rows: Vec<Vector> = Vec::new();
        for a in 0..dy {
            for k in 0..=dh {
                let mut row = Vector::zeros(unknowns);
                for i in 0..m {
                    row[i * dy + a] = if k < dh { forwards[i].hidden[k] } else { 1.0 };
                }
                rows.push(row);
            }
        }
        for k in 0..dh {
            let w2k = params.w2.column(k);
            for j in 0..=dx {
                let mut row = Vector::zeros(unknowns);
                for i in 0..m {
                    let slope = match boundary[k].iter().position(|&b| b == i) {
                        Some(_) if spec.boundary[i].placement == SlopePlacement::DoublyFlat => 0.0,
                        Some(_) => s_star[i],
                        None => act.derivative(pre[i][k]),
                    };
                    for a in 0..dy {
                        row[i * dy + a] = slope * w2k[a] * augmented[i][j];
                    }
                }
                rows.push(row);
            }
        }
        for (i, b) in spec.boundary.iter().enumerate() {
            if b.placement == SlopePlacement::DoublyFlat {
                let mut row = Vector::zeros(unknowns);
                for a in 0..dy {
                    row[i * dy + a] = params.w2[(a, b.unit)];
                }
                rows.push(row);
            }
        }
        let system = Matrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
        let null = nullspace_basis(&system, 1e-10)?;
        if null.ncols() == 0 {
            return fail("stationarity conditions leave no freedom for the labels");
        }
        let mut found = None;
        for _ in 0..64 {
            let coef = Vector::from_fn(null.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut r = &null * coef;
            let rms = (r.norm_squared() / unknowns as f64).sqrt();
            if rms == 0.0 {
                continue;
            }
            r *= spec.residual_scale / rms;
            // non-flat boundary samples need W2[:,k]^T r_i > 0, or a ray descends
            let mut weights: Vec<f64> = spec
                .boundary
                .iter()
                .enumerate()
                .filter(|(_, b)| b.placement != SlopePlacement::DoublyFlat)
                .map(|(i, b)| (0..dy).map(|a| params.w2[(a, b.unit)] * r[i * dy + a]).sum())
                .collect();
            if weights.iter().all(|&w| w < 0.0) {
                r = -r;
                weights.iter_mut().for_each(|w| *w = -*w);
            }
            let ok = weights.iter().all(|&w| w > 1e-3 * spec.residual_scale);
            if ok {
                found = Some(r);
                break;
            }
        }
        let Some(r) = found else {
            return fail("no label choice keeps every boundary ray nondecreasing");
        };
        (0..m).map(|i| Vector::from_fn(dy, |a, _| r[i * dy + a])).collect()
    };

    let labels: Vec<Vector> = forwards.iter().zip(&residuals).map(|(f, r)| &f.output - r).collect();
    let data = Dataset::new(inputs, labels)?;
    Ok(Construction {
        params,
        data,
        s_star,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sosp_core::first_order::{increasing_check, solve_subdiff_qp, FlatSet};
    use sosp_core::network::PointContext;
    use sosp_core::{SquaredLoss, TesterConfig};

    #[test]
    fn interior_slope() {
        let spec = ConstructionSpec::single(Dims::new(3, 2, 1), 12, SlopePlacement::Interior, 0.5);
        for seed in 0..5 {
            let c = construct_boundary_fosp(&spec, seed).unwrap();
            let ctx = PointContext::new(&c.params, &c.data, &SquaredLoss, 0.0, 1e-10).unwrap();
            assert_eq!(ctx.boundary.counts(), vec![1, 0]);
            let qp = solve_subdiff_qp(&ctx, 0, 1e-10).unwrap();
            assert!(qp.objective <= 1e-12);
            assert!(qp.s_star[0] > 0.1 && qp.s_star[0] < 0.9);
            assert!((qp.s_star[0] - c.s_star[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn edge_slope_is_singly_flat() {
        let spec = ConstructionSpec::single(Dims::new(3, 1, 1), 12, SlopePlacement::Upper, 0.5);
        let c = construct_boundary_fosp(&spec, 3).unwrap();
        let cfg = TesterConfig::default();
        let ctx = PointContext::new(&c.params, &c.data, &SquaredLoss, 0.0, 1e-10).unwrap();
        let qp = solve_subdiff_qp(&ctx, 0, cfg.qp_tol).unwrap();
        let check = increasing_check(&ctx, 0, &qp.s_star, &cfg).unwrap();
        assert!(check.descent.is_none());
        assert_eq!(check.flat_sets, vec![FlatSet::Plus]);
    }

    #[test]
    fn two_samples_on_one_unit() {
        let spec = ConstructionSpec {
            dims: Dims::new(3, 2, 1),
            samples: 14,
            boundary: vec![
                BoundarySpec { unit: 0, placement: SlopePlacement::Interior },
                BoundarySpec { unit: 0, placement: SlopePlacement::Interior },
            ],
            residual_scale: 0.5,
            activation: Activation::relu(),
        };
        let c = construct_boundary_fosp(&spec, 1).unwrap();
        let ctx = PointContext::new(&c.params, &c.data, &SquaredLoss, 0.0, 1e-10).unwrap();
        assert_eq!(ctx.boundary.counts(), vec![2, 0]);
    }

    #[test]
    fn perfect_fit_requires_flat_samples() {
        let spec = ConstructionSpec::single(Dims::new(2, 1, 1), 5, SlopePlacement::Interior, 0.0);
        assert!(construct_boundary_fosp(&spec, 0).is_err());
    }
}
