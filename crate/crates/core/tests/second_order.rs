mod common;

use common::*;
use proptest::prelude::*;
use sosp_core::network::{expansion_terms, PointContext, SignPattern};
use sosp_core::numerics::{Matrix, Vector};
use sosp_core::second_order::{assemble_so_qp, icqp_reduce, so_objective, solve_icqp, ConeQp, QpVerdict};
use sosp_core::{Activation, Dims, Perturbation, SquaredLoss, TesterConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn assembled_form_is_twice_the_objective(seed in 0u64..10_000, sigma in -1i8..=1) {
        let dims = Dims::new(3, 2, 2);
        let mut r = rng(seed);
        let mut params = random_params(&mut r, dims, Activation::leaky(0.2).unwrap());
        let data = random_data(&mut r, 3, 2, 7);
        place_on_boundary(&mut params, &data, 1, 2);
        let ctx = PointContext::new(&params, &data, &SquaredLoss, 0.0, 1e-10).unwrap();
        let mut pattern = SignPattern::zeros(&ctx.boundary);
        pattern.signs[1][0] = sigma;
        let qp = assemble_so_qp(&ctx, &pattern, 1e-10).unwrap();
        let eta = random_direction(&mut r, dims);
        let direct = so_objective(&ctx, &pattern, &eta);
        let value = qp.value(&eta.to_flat());
        prop_assert!((value - 2.0 * direct).abs() <= 1e-9 * (direct.abs() + 1.0));
    }

    #[test]
    fn objective_matches_expansion_inside_the_cone(seed in 0u64..10_000, sigma in prop::sample::select(vec![-1i8, 1])) {
        let dims = Dims::new(2, 2, 1);
        let mut r = rng(seed);
        let mut params = random_params(&mut r, dims, Activation::relu());
        let data = random_data(&mut r, 2, 1, 5);
        place_on_boundary(&mut params, &data, 0, 0);
        let ctx = PointContext::new(&params, &data, &SquaredLoss, 0.0, 1e-10).unwrap();
        let mut pattern = SignPattern::zeros(&ctx.boundary);
        pattern.signs[0][0] = sigma;
        let mut eta = random_direction(&mut r, dims);
        // push v_0 onto the sigma side of the kink
        let xbar = ctx.augmented[0].clone();
        let along = eta.v_k(0).dot(&xbar);
        let v = eta.v_k(0) + &xbar * ((f64::from(sigma) - along) / xbar.norm_squared());
        eta.set_v_k(0, &v);
        let direct = so_objective(&ctx, &pattern, &eta);
        let terms = expansion_terms(&ctx, &eta).unwrap();
        prop_assert!((direct - terms.second).abs() <= 1e-10 * (direct.abs() + 1.0));
    }

    #[test]
    fn scaling_directions_violate_the_homogeneity_rows(seed in 0u64..10_000) {
        let dims = Dims::new(3, 3, 2);
        let mut r = rng(seed);
        let params = random_params(&mut r, dims, Activation::relu());
        let data = random_data(&mut r, 3, 2, 6);
        let ctx = PointContext::new(&params, &data, &SquaredLoss, 0.0, 1e-10).unwrap();
        let qp = assemble_so_qp(&ctx, &SignPattern::zeros(&ctx.boundary), 1e-10).unwrap();
        for k in 0..dims.hidden {
            let s = Perturbation::scaling_direction(&params, k).to_flat();
            let hit = &qp.a * &s;
            for j in 0..dims.hidden {
                if j == k {
                    prop_assert!((hit[j] + s.norm_squared()).abs() <= 1e-10 * s.norm_squared());
                } else {
                    prop_assert!(hit[j].abs() <= 1e-12 * s.norm_squared());
                }
            }
        }
    }

    #[test]
    fn icqp_agrees_with_cone_sampling(seed in 0u64..10_000, p in 2usize..7, q in 0usize..2, r_count in 1usize..3) {
        prop_assume!(q + r_count < p);
        let mut r = rng(seed);
        let half = gaussian_mat(&mut r, p, p);
        let shift = Matrix::identity(p, p) * (gaussian_vec(&mut r, 1)[0] * 2.0);
        let qm = (&half * half.transpose()) * 0.3 - shift;
        let qm = (&qm + qm.transpose()) * 0.5;
        let cone = ConeQp::new(qm, gaussian_mat(&mut r, q, p), gaussian_mat(&mut r, r_count, p), 1e-10).unwrap();
        let c = solve_icqp(&cone, &TesterConfig::default()).unwrap();
        let red = icqp_reduce(&cone, 1e-10).unwrap();
        let n = red.lift.ncols();
        let mut lowest = f64::INFINITY;
        for _ in 0..4000 {
            let mut nu = gaussian_vec(&mut r, n);
            for j in 0..red.r {
                nu[j] = nu[j].abs();
            }
            let eta = red.lift(&nu);
            lowest = lowest.min(cone.value(&eta) / eta.norm_squared());
        }
        let scale = cone.q_norm();
        match c.verdict {
            QpVerdict::T3 => {
                let w = c.witness.unwrap();
                prop_assert!(cone.is_negative_witness(&w));
            }
            _ => prop_assert!(lowest >= -1e-8 * scale, "sampled {lowest} with verdict {:?}", c.verdict),
        }
    }
}

#[test]
fn reduction_keeps_constraints() {
    let mut r = rng(11);
    let q = gaussian_mat(&mut r, 6, 6);
    let q = (&q + q.transpose()) * 0.5;
    let cone = ConeQp::new(q, gaussian_mat(&mut r, 2, 6), gaussian_mat(&mut r, 2, 6), 1e-10).unwrap();
    let red = icqp_reduce(&cone, 1e-10).unwrap();
    let nu = Vector::from_row_slice(&[0.5, 2.0, -1.0, 0.25]);
    let eta = red.lift(&nu);
    assert!((&cone.a * &eta).norm() < 1e-10);
    let b = &cone.b * &eta;
    assert!((b[0] - 0.5).abs() < 1e-10 && (b[1] - 2.0).abs() < 1e-10);
    assert!((cone.value(&eta) - red.reduced_value(&nu)).abs() < 1e-9);
}
