mod common;

use common::*;
use proptest::prelude::*;
use sosp_core::network::{empirical_risk, expansion_terms, PointContext};
use sosp_core::{Activation, Dataset, Dims, NetworkParams, SquaredLoss};

fn point(seed: u64, dims: Dims, m: usize, boundary: bool, leaky: bool) -> (NetworkParams, Dataset) {
    let activation = if leaky { Activation::leaky(0.3).unwrap() } else { Activation::relu() };
    let mut r = rng(seed);
    loop {
        let mut params = random_params(&mut r, dims, activation);
        let data = random_data(&mut r, dims.input, dims.output, m);
        if boundary {
            place_on_boundary(&mut params, &data, 0, 0);
        }
        if min_off_boundary_preact(&params, &data) > 1e-2 {
            return (params, data);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn first_term_matches_difference_quotient(
        seed in 0u64..10_000,
        dx in 1usize..5,
        dh in 1usize..4,
        dy in 1usize..3,
        m in 1usize..8,
        boundary in any::<bool>(),
        leaky in any::<bool>(),
    ) {
        let dims = Dims::new(dx, dh, dy);
        let (params, data) = point(seed, dims, m, boundary, leaky);
        let ctx = PointContext::new(&params, &data, &SquaredLoss, 0.0, 1e-10).unwrap();
        let eta = random_direction(&mut rng(seed ^ 0xABCD), dims);
        let terms = expansion_terms(&ctx, &eta).unwrap();
        let base = empirical_risk(&params, &data, &SquaredLoss).unwrap();
        for t in [1e-4, 1e-5, 1e-6] {
            let moved = empirical_risk(&params.perturbed(&eta, t), &data, &SquaredLoss).unwrap();
            let quotient = (moved - base) / t;
            let bound = 10.0 * t * (terms.second.abs() + 1.0) + 1e-9 * (base.abs() + 1.0);
            prop_assert!((quotient - terms.first).abs() <= bound, "t={t}: {quotient} vs {}", terms.first);
        }
        let t = 1e-4;
        let moved = empirical_risk(&params.perturbed(&eta, t), &data, &SquaredLoss).unwrap();
        let quadratic = (moved - base - t * terms.first) / (t * t);
        prop_assert!((quadratic - terms.second).abs() <= 1e-2 * terms.second.abs().max(1e-2));
    }

    #[test]
    fn terms_are_homogeneous(seed in 0u64..10_000, gamma in 0.01f64..100.0, boundary in any::<bool>()) {
        let dims = Dims::new(3, 2, 2);
        let (params, data) = point(seed, dims, 6, boundary, false);
        let ctx = PointContext::new(&params, &data, &SquaredLoss, 0.0, 1e-10).unwrap();
        let eta = random_direction(&mut rng(seed + 1), dims);
        let a = expansion_terms(&ctx, &eta).unwrap();
        let b = expansion_terms(&ctx, &eta.scaled(gamma)).unwrap();
        prop_assert!((b.first - gamma * a.first).abs() <= 1e-10 * gamma * (a.first.abs() + 1.0));
        prop_assert!((b.second - gamma * gamma * a.second).abs() <= 1e-10 * gamma * gamma * (a.second.abs() + 1.0));
    }
}

#[test]
fn boundary_slope_follows_the_direction() {
    // one unit, one sample exactly on the kink: moving v to either side changes the slope used
    let params = NetworkParams::new(
        sosp_core::numerics::Matrix::from_element(1, 1, 1.0),
        sosp_core::numerics::Vector::from_element(1, -1.0),
        sosp_core::numerics::Matrix::from_element(1, 1, 1.0),
        sosp_core::numerics::Vector::from_element(1, 0.0),
        Activation::leaky(0.5).unwrap(),
    )
    .unwrap();
    let data = Dataset::new(
        vec![sosp_core::numerics::Vector::from_element(1, 1.0)],
        vec![sosp_core::numerics::Vector::from_element(1, 1.0)],
    )
    .unwrap();
    let ctx = PointContext::new(&params, &data, &SquaredLoss, 0.0, 1e-10).unwrap();
    assert_eq!(ctx.boundary.total(), 1);
    let mut up = sosp_core::Perturbation::zeros(params.dims());
    up.v[(0, 1)] = 1.0;
    let down = up.scaled(-1.0);
    // output 0, label 1, gradient -1: first = -h'(dir) * dir
    assert_eq!(expansion_terms(&ctx, &up).unwrap().first, -1.0);
    assert_eq!(expansion_terms(&ctx, &down).unwrap().first, 0.5);
}
