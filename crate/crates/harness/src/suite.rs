//! Oracle checks of the tester against independent computations: finite
//! differences, brute-force sampling of cones and simplices, eigenvalues of
//! projected matrices, and known-verdict fixtures.
//!
//! Each check returns a [`CheckReport`]; `sosp selftest` runs them with the
//! small [`Budget::quick`] sizes and the acceptance tests with [`Budget::full`].

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use sosp_core::network::{empirical_risk, expansion_terms, forward, PointContext, SignPattern};
use sosp_core::numerics::{nullspace_basis, Matrix, Vector};
use sosp_core::orchestrator::{QpKind, Stage};
use sosp_core::second_order::{
    assemble_so_qp, classify_projected_spectrum, copositivity_classify, log_norm_slope, pareto_spectrum,
    solve_ecqp_pgd, solve_icqp, ConeQp, CpCase, QpMethod, QpVerdict,
};
use sosp_core::{
    sosp_check, validate_descent, Activation, Dataset, Dims, Error, NetworkParams, Perturbation, SquaredLoss,
    TesterConfig, VerdictKind,
};

use crate::construct::{construct_boundary_fosp, ConstructionSpec, SlopePlacement};
use crate::fixtures::{boundary_saddle, trained_fosp};
use crate::stats::{run_many, RunConfig};

/// Pinned tolerances.
pub mod tol {
    /// Finite-difference error allowed, as a multiple of `t * (|second| + |eta|^2)`.
    pub const FIRST_ORDER_FACTOR: f64 = 10.0;
    pub const STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];
    /// Relative error of the fitted quadratic coefficient.
    pub const QUADRATIC_RELATIVE: f64 = 1e-2;
    pub const QUADRATIC_STEP: f64 = 1e-4;
    pub const ORACLE_FALLBACK_RATE: f64 = 0.05;
    pub const SIMPLEX_FLOOR: f64 = -1e-8;
    pub const CONE_FLOOR: f64 = -1e-8;
    pub const WITNESS_FEASIBILITY: f64 = 1e-8;
    pub const WITNESS_NEGATIVITY: f64 = 1e-10;
    pub const SCALING_TERMS: f64 = 1e-8;
    pub const MIN_AVERAGE_BOUNDARY: f64 = 1.0;
    pub const MIN_RUNS_WITHOUT_FLAT: usize = 8;
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckReport {
    pub fn line(&self) -> String {
        format!(
            "{} [{}] {} ({:.1}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

/// Instance counts for every check.
#[derive(Clone, Debug)]
pub struct Budget {
    pub expansion_configs: usize,
    pub descent_random: usize,
    pub descent_saddles: usize,
    pub ecqp_instances: usize,
    pub copositive_instances: usize,
    pub simplex_samples: usize,
    pub icqp_instances: usize,
    pub cone_samples: usize,
    pub scaling_points: usize,
    pub table_runs: usize,
    pub table_iterations: usize,
    pub table_decay_period: usize,
    pub verdict_seeds: usize,
}

impl Budget {
    pub fn full() -> Self {
        Self {
            expansion_configs: 100,
            descent_random: 200,
            descent_saddles: 50,
            ecqp_instances: 200,
            copositive_instances: 500,
            simplex_samples: 100_000,
            icqp_instances: 200,
            cone_samples: 100_000,
            scaling_points: 20,
            table_runs: 10,
            table_iterations: 20_000,
            table_decay_period: 2_000,
            verdict_seeds: 20,
        }
    }

    pub fn quick() -> Self {
        Self {
            expansion_configs: 20,
            descent_random: 20,
            descent_saddles: 5,
            ecqp_instances: 30,
            copositive_instances: 50,
            simplex_samples: 20_000,
            icqp_instances: 30,
            cone_samples: 20_000,
            scaling_points: 6,
            table_runs: 3,
            table_iterations: 20_000,
            table_decay_period: 2_000,
            verdict_seeds: 4,
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| normal(rng))
}

fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| normal(rng))
}

fn symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = gaussian_mat(rng, n, n);
    (&g + g.transpose()) * 0.5
}

fn finish(id: u32, name: &'static str, started: Instant, passed: bool, detail: String) -> CheckReport {
    CheckReport {
        id,
        name,
        passed,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn random_point(rng: &mut ChaCha8Rng, dims: Dims, m: usize, activation: Activation) -> (NetworkParams, Dataset) {
    loop {
        let params = NetworkParams::new(
            gaussian_mat(rng, dims.hidden, dims.input),
            gaussian_vec(rng, dims.hidden),
            gaussian_mat(rng, dims.output, dims.hidden),
            gaussian_vec(rng, dims.output),
            activation,
        )
        .expect("finite parameters");
        let inputs: Vec<Vector> = (0..m).map(|_| gaussian_vec(rng, dims.input)).collect();
        let labels: Vec<Vector> = (0..m).map(|_| gaussian_vec(rng, dims.output)).collect();
        let clear = inputs.iter().all(|x| {
            let pre = &params.w1 * x + &params.b1;
            pre.iter().all(|v| v.abs() > 1e-2)
        });
        if clear {
            return (params, Dataset::new(inputs, labels).expect("finite data"));
        }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dims: Dims) -> Perturbation {
    let flat = gaussian_vec(rng, dims.param_count());
    Perturbation::from_flat(dims, &(&flat / flat.norm())).expect("matching length")
}

/// Finite-difference check of the first- and second-order expansion terms.
pub fn expansion_oracle(budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let results: Vec<Result<(f64, f64), String>> = (0..budget.expansion_configs as u64)
        .into_par_iter()
        .map(|seed| {
            let mut r = rng(0xE0 + seed);
            let dims = Dims::new(r.random_range(1..=8), r.random_range(1..=4), r.random_range(1..=3));
            let m = r.random_range(1..=20);
            let activation = if seed % 3 == 2 { Activation::leaky(0.25).unwrap() } else { Activation::relu() };
            let (params, data) = if seed % 2 == 0 {
                random_point(&mut r, dims, m, activation)
            } else {
                // labels need more freedom than there are stationarity equations
                let samples = 20;
                let mut dims = Dims::new(dims.input.max(2), dims.hidden, dims.output);
                while dims.param_count() + 4 > samples * dims.output && dims.input > 2 {
                    dims.input -= 1;
                }
                while dims.param_count() + 4 > samples * dims.output && dims.hidden > 1 {
                    dims.hidden -= 1;
                }
                let spec = ConstructionSpec {
                    activation,
                    ..ConstructionSpec::single(dims, samples, SlopePlacement::Interior, 0.5)
                };
                let c = construct_boundary_fosp(&spec, seed).map_err(|e| e.to_string())?;
                (c.params, c.data)
            };
            let dims = params.dims();
            let ctx = PointContext::new(&params, &data, &SquaredLoss, 0.0, 1e-10).map_err(|e| e.to_string())?;
            if seed % 2 == 1 && ctx.boundary.total() == 0 {
                return Err(format!("config {seed}: construction lost its boundary sample"));
            }
            let eta = unit_direction(&mut r, dims);
            let terms = expansion_terms(&ctx, &eta).map_err(|e| e.to_string())?;
            let risk = |t: f64| empirical_risk(&params.perturbed(&eta, t), &data, &SquaredLoss).unwrap();
            let base = risk(0.0);
            let curvature = terms.second.abs() + eta.norm().powi(2);
            let mut worst_first: f64 = 0.0;
            for t in tol::STEPS {
                let err = ((risk(t) - base) / t - terms.first).abs();
                let ratio = err / (tol::FIRST_ORDER_FACTOR * t * curvature);
                worst_first = worst_first.max(ratio);
            }
            let t = tol::QUADRATIC_STEP;
            let fitted = (risk(t) - base - t * terms.first) / (t * t);
            let quad = (fitted - terms.second).abs() / terms.second.abs().max(1e-3);
            Ok((worst_first, quad))
        })
        .collect();
    let errors: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let worst_first = results.iter().flatten().map(|r| r.0).fold(0.0, f64::max);
    let worst_quad = results.iter().flatten().map(|r| r.1).fold(0.0, f64::max);
    let elapsed = started.elapsed().as_secs_f64();
    let passed = errors.is_empty() && worst_first <= 1.0 && worst_quad <= tol::QUADRATIC_RELATIVE && elapsed < 30.0;
    finish(
        1,
        "expansion terms vs finite differences",
        started,
        passed,
        format!(
            "{} configs, worst first-order error/bound {worst_first:.2e}, worst quadratic relative error {worst_quad:.2e}, {} errors{}",
            results.len(),
            errors.len(),
            errors.first().map(|e| format!(" (first: {e})")).unwrap_or_default()
        ),
    )
}

/// Every descent verdict on random and constructed points is confirmed.
pub fn descent_soundness(budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let cfg = TesterConfig::default();
    let random: Vec<Result<VerdictKind, String>> = (0..budget.descent_random as u64)
        .into_par_iter()
        .map(|seed| {
            let mut r = rng(0xD0 + seed);
            let dims = Dims::new(r.random_range(1..=5), r.random_range(1..=3), r.random_range(1..=2));
            let m = r.random_range(2..=15);
            let (params, data) = random_point(&mut r, dims, m, Activation::relu());
            check_descent(&params, &data, &cfg.clone().with_seed(seed))
        })
        .collect();
    let saddles: Vec<Result<VerdictKind, String>> = (0..budget.descent_saddles as u64)
        .into_par_iter()
        .map(|seed| {
            let c = boundary_saddle(Dims::new(3, 2, 2), 16, seed).map_err(|e| e.to_string())?;
            check_descent(&c.params, &c.data, &cfg.clone().with_seed(seed))
        })
        .collect();
    let count = |v: &[Result<VerdictKind, String>]| {
        (
            v.iter().filter(|r| matches!(r, Ok(VerdictKind::DescentDirection))).count(),
            v.iter().filter(|r| r.is_err()).count(),
        )
    };
    let (rd, re) = count(&random);
    let (sd, se) = count(&saddles);
    let first_error = random.iter().chain(&saddles).find_map(|r| r.as_ref().err().cloned());
    let elapsed = started.elapsed().as_secs_f64();
    finish(
        2,
        "descent directions are confirmed on the risk",
        started,
        re + se == 0 && elapsed < 120.0,
        format!(
            "random: {rd}/{} descent, constructed saddles: {sd}/{} descent, {} failures{}",
            random.len(),
            saddles.len(),
            re + se,
            first_error.map(|e| format!(" (first: {e})")).unwrap_or_default()
        ),
    )
}

fn check_descent(params: &NetworkParams, data: &Dataset, cfg: &TesterConfig) -> Result<VerdictKind, String> {
    let v = sosp_check(params, data, &SquaredLoss, cfg).map_err(|e| e.to_string())?;
    if let Some(eta) = &v.direction {
        validate_descent(params, data, &SquaredLoss, eta).map_err(|e| e.to_string())?;
        let base = empirical_risk(params, data, &SquaredLoss).map_err(|e| e.to_string())?;
        let moved = empirical_risk(&params.perturbed(eta, v.step.unwrap_or(0.0)), data, &SquaredLoss)
            .map_err(|e| e.to_string())?;
        if moved.is_nan() || moved >= base {
            return Err("reported step does not decrease the risk".into());
        }
    }
    Ok(v.kind)
}

/// Random equality-constrained QP whose projected spectrum has a prescribed
/// sign structure: 0 positive definite, 1 singular, 2 indefinite.
fn designed_ecqp(seed: u64, class: u64) -> (Matrix, Matrix, QpVerdict) {
    let mut r = rng(0xEC + seed);
    let p = r.random_range(2..=20);
    let q = r.random_range(0..=5.min(p - 1));
    let a = gaussian_mat(&mut r, q, p);
    let w = nullspace_basis(&a, 1e-10).expect("null space");
    let n = w.ncols();
    let mut eig: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let verdict = match class {
        0 => QpVerdict::T1,
        1 => {
            let zeros = r.random_range(1..=n.min(2));
            eig.iter_mut().take(zeros).for_each(|e| *e = 0.0);
            QpVerdict::T2
        }
        _ => {
            let neg = r.random_range(1..=n.min(3));
            eig.iter_mut().take(neg).for_each(|e| *e = -r.random_range(0.5..2.0));
            QpVerdict::T3
        }
    };
    let basis = gaussian_mat(&mut r, n, n).qr().q();
    let inner = &basis * Matrix::from_diagonal(&Vector::from_vec(eig)) * basis.transpose();
    let mut qm = &w * inner * w.transpose();
    if q > 0 {
        let s = symmetric(&mut r, q) * 0.3;
        let c = gaussian_mat(&mut r, n, q) * 0.3;
        let cross = &w * c * &a;
        qm += a.transpose() * s * &a + &cross + cross.transpose();
    }
    let qm = (&qm + qm.transpose()) * 0.5;
    (qm, a, verdict)
}

/// PGD against the projected-spectrum oracle.
pub fn ecqp_cross_oracle(budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let cfg = TesterConfig::default();
    struct Outcome {
        designed: QpVerdict,
        oracle: QpVerdict,
        pgd: QpVerdict,
        fallback: bool,
        slope: Option<f64>,
    }
    let outcomes: Vec<Outcome> = (0..budget.ecqp_instances as u64)
        .into_par_iter()
        .map(|seed| {
            let (q, a, designed) = designed_ecqp(seed, seed % 3);
            let oracle = classify_projected_spectrum(&q, &a, &cfg).expect("oracle").verdict;
            let run = solve_ecqp_pgd(&q, &a, &cfg, seed).expect("pgd");
            let slope = (run.verdict == QpVerdict::T3 && run.method == QpMethod::Pgd)
                .then(|| log_norm_slope(&run.diagnostics.log_norms));
            Outcome {
                designed,
                oracle,
                pgd: run.verdict,
                fallback: run.diagnostics.fallback,
                slope,
            }
        })
        .collect();
    let conclusive: Vec<&Outcome> = outcomes.iter().filter(|o| !o.fallback).collect();
    let agree = conclusive.iter().filter(|o| o.pgd == o.oracle).count();
    let designed_ok = outcomes.iter().filter(|o| o.designed == o.oracle).count();
    let fallbacks = outcomes.len() - conclusive.len();
    let fallback_rate = fallbacks as f64 / outcomes.len().max(1) as f64;
    let slopes: Vec<f64> = outcomes.iter().filter_map(|o| o.slope).collect();
    let positive = slopes.iter().filter(|&&s| s > 0.0).count();
    let mix = |v: QpVerdict| outcomes.iter().filter(|o| o.oracle == v).count();
    finish(
        3,
        "equality-constrained QP: PGD vs projected spectrum",
        started,
        agree == conclusive.len()
            && designed_ok == outcomes.len()
            && fallback_rate < tol::ORACLE_FALLBACK_RATE
            && positive == slopes.len(),
        format!(
            "{agree}/{} conclusive PGD runs agree, {fallbacks} fallbacks ({:.1}%), designed verdict matched {designed_ok}/{}, T1/T2/T3 = {}/{}/{}, {positive}/{} divergent runs with positive log-norm slope",
            conclusive.len(),
            100.0 * fallback_rate,
            outcomes.len(),
            mix(QpVerdict::T1),
            mix(QpVerdict::T2),
            mix(QpVerdict::T3),
            slopes.len()
        ),
    )
}

fn simplex_minimum(s: &Matrix, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let r = s.nrows();
    let mut lowest = f64::INFINITY;
    let mut x = Vector::zeros(r);
    for _ in 0..samples {
        let mut total = 0.0;
        for j in 0..r {
            let e = -(1.0 - rng.random::<f64>()).ln();
            x[j] = e;
            total += e;
        }
        x /= total;
        lowest = lowest.min(x.dot(&(s * &x)));
    }
    lowest
}

/// Pareto-spectrum copositivity against simplex sampling, plus hand cases.
pub fn copositivity_suite(budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let cfg = TesterConfig::default();
    let results: Vec<(CpCase, f64)> = (0..budget.copositive_instances as u64)
        .into_par_iter()
        .map(|seed| {
            let mut r = rng(0xC0 + seed);
            let n = r.random_range(1..=4);
            let shift = r.random_range(-1.0..3.0);
            let s = symmetric(&mut r, n) + Matrix::identity(n, n) * shift;
            let c = copositivity_classify(&s, cfg.spectral_tol, cfg.pos_tol, cfg.max_pareto_order).expect("classify");
            (c.case, simplex_minimum(&s, budget.simplex_samples, &mut r))
        })
        .collect();
    let contradictions = results
        .iter()
        .filter(|(case, low)| (*case == CpCase::Cp3) != (*low < tol::SIMPLEX_FLOOR))
        .count();
    let hand = hand_pareto_cases();
    let count = |c: CpCase| results.iter().filter(|r| r.0 == c).count();
    finish(
        4,
        "copositivity vs simplex sampling",
        started,
        contradictions == 0 && hand.is_ok(),
        format!(
            "{contradictions}/{} contradictions (CP1/CP2/CP3 = {}/{}/{}), hand-enumerated spectra: {}",
            results.len(),
            count(CpCase::Cp1),
            count(CpCase::Cp2),
            count(CpCase::Cp3),
            match &hand {
                Ok(()) => "match".to_string(),
                Err(e) => e.clone(),
            }
        ),
    )
}

fn hand_pareto_cases() -> Result<(), String> {
    let cases: [(Matrix, Vec<f64>); 4] = [
        (Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]), vec![2.0, 5.0]),
        (Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), vec![0.0, 1.0]),
        (Matrix::from_row_slice(2, 2, &[1.0, -3.0, -3.0, 1.0]), vec![-2.0]),
        (Matrix::identity(4, 4), vec![1.0]),
    ];
    for (s, expected) in cases {
        let values = pareto_spectrum(&s, 1e-9, 20).map_err(|e| e.to_string())?.values(1e-12);
        let same = values.len() == expected.len() && values.iter().zip(&expected).all(|(a, b)| (a - b).abs() <= 1e-14);
        if !same {
            return Err(format!("spectrum {values:?}, expected {expected:?}"));
        }
    }
    Ok(())
}

/// Random cone QP; every third instance is positive semidefinite with a
/// nontrivial null space.
fn random_cone_qp(seed: u64) -> ConeQp {
    let mut r = rng(0x1C + seed);
    loop {
        let p = r.random_range(3..=12);
        let q = r.random_range(0..=4.min(p - 2));
        let rr = r.random_range(1..=3.min(p - q - 1));
        let qm = match seed % 3 {
            0 => symmetric(&mut r, p),
            1 => {
                let deficit = r.random_range(1..=2.min(p - 1));
                let g = gaussian_mat(&mut r, p - deficit, p);
                g.transpose() * g
            }
            _ => {
                let g = gaussian_mat(&mut r, p, p);
                g.transpose() * g * 0.2 - Matrix::identity(p, p) * r.random_range(0.0..0.5)
            }
        };
        let qm = (&qm + qm.transpose()) * 0.5;
        if let Ok(cone) = ConeQp::new(qm, gaussian_mat(&mut r, q, p), gaussian_mat(&mut r, rr, p), 1e-10) {
            return cone;
        }
    }
}

/// Smallest `eta^T Q eta / |eta|^2` over random feasible directions, drawn in
/// the null space of `A` and kept when `B eta >= 0`.
fn cone_minimum(cone: &ConeQp, samples: usize, rng: &mut ChaCha8Rng) -> (f64, usize) {
    let w = nullspace_basis(&cone.a, 1e-10).expect("null space");
    let mut lowest = f64::INFINITY;
    let mut kept = 0;
    for _ in 0..samples {
        let eta = &w * gaussian_vec(rng, w.ncols());
        if (&cone.b * &eta).iter().all(|&v| v >= 0.0) {
            kept += 1;
            lowest = lowest.min(cone.value(&eta) / eta.norm_squared());
        }
    }
    (lowest, kept)
}

fn literal_negative_witness(cone: &ConeQp, eta: &Vector) -> bool {
    let n = eta.norm();
    let eq = if cone.a.nrows() == 0 { 0.0 } else { (&cone.a * eta).norm() };
    let ineq = (&cone.b * eta).min();
    n > 0.0
        && eq <= tol::WITNESS_FEASIBILITY * n
        && ineq >= -tol::WITNESS_FEASIBILITY * n
        && cone.value(eta) <= -tol::WITNESS_NEGATIVITY * cone.q_norm() * n * n
}

/// Inequality-constrained QPs against cone sampling.
pub fn icqp_suite(budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let cfg = TesterConfig::default();
    struct Outcome {
        verdict: QpVerdict,
        contradiction: bool,
        bad_witness: bool,
        sampled_negative: bool,
    }
    let outcomes: Vec<Outcome> = (0..budget.icqp_instances as u64)
        .into_par_iter()
        .map(|seed| {
            let cone = random_cone_qp(seed);
            let c = solve_icqp(&cone, &cfg).expect("icqp");
            let mut r = rng(0x5A + seed);
            let (low, _) = cone_minimum(&cone, budget.cone_samples, &mut r);
            let negative = low < tol::CONE_FLOOR * cone.q_norm();
            let bad_witness = c.verdict == QpVerdict::T3
                && !c.witness.as_ref().is_some_and(|w| literal_negative_witness(&cone, w));
            Outcome {
                verdict: c.verdict,
                contradiction: negative && c.verdict != QpVerdict::T3,
                bad_witness,
                sampled_negative: negative,
            }
        })
        .collect();
    let contradictions = outcomes.iter().filter(|o| o.contradiction).count();
    let bad = outcomes.iter().filter(|o| o.bad_witness).count();
    let count = |v: QpVerdict| outcomes.iter().filter(|o| o.verdict == v).count();
    let t3_confirmed = outcomes.iter().filter(|o| o.verdict == QpVerdict::T3 && o.sampled_negative).count();
    finish(
        5,
        "inequality-constrained QP vs cone sampling",
        started,
        contradictions == 0 && bad == 0,
        format!(
            "{contradictions}/{} contradictions, {bad} T3 witnesses failing re-verification, T1/T2/T3 = {}/{}/{} ({t3_confirmed} T3 also found by sampling)",
            outcomes.len(),
            count(QpVerdict::T1),
            count(QpVerdict::T2),
            count(QpVerdict::T3)
        ),
    )
}

fn qp_counts(trace: &[Stage]) -> (usize, usize) {
    let eq = trace.iter().filter(|s| matches!(s, Stage::SecondOrderEquality)).count();
    let ineq = trace.iter().filter(|s| matches!(s, Stage::SecondOrderInequality { .. })).count();
    (eq, ineq)
}

/// QP counts per stage trace on fixtures with known `K` and `L`.
pub fn stage_accounting(_budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let cfg = TesterConfig::default();
    let mut notes = Vec::new();
    let mut ok = true;
    let cases = [
        ("L=0", SlopePlacement::Interior, 0.5, (0usize, 0usize, 1usize), (1usize, 0usize)),
        ("K=1,L=1", SlopePlacement::DoublyFlat, 0.0, (1, 1, 1), (1, 2)),
    ];
    for (name, placement, scale, (k, l, m), expected) in cases {
        let spec = ConstructionSpec::single(Dims::new(3, 2, 1), 12, placement, scale);
        let outcome = construct_boundary_fosp(&spec, 7)
            .map_err(|e| e.to_string())
            .and_then(|c| sosp_check(&c.params, &c.data, &SquaredLoss, &cfg).map_err(|e| e.to_string()));
        match outcome {
            Ok(v) => {
                let d = &v.diagnostics;
                let counts = qp_counts(&d.trace);
                let records = (
                    d.qps.iter().filter(|q| q.kind == QpKind::Ecqp).count(),
                    d.qps.iter().filter(|q| q.kind == QpKind::Icqp).count(),
                );
                let good = counts == expected && records == expected && (d.k, d.l, d.m) == (k, l, m);
                ok &= good;
                notes.push(format!(
                    "{name}: (K, L, M) = ({}, {}, {}), {} ECQP + {} ICQP, verdict {:?}",
                    d.k, d.l, d.m, counts.0, counts.1, v.kind
                ));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    finish(6, "QP counts from the stage trace", started, ok, notes.join("; "))
}

/// Relative size of the scaling-direction terms and the rank-deficiency test.
pub fn scale_invariance(budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let cfg = TesterConfig::default();
    let trained_target = budget.scaling_points / 2;
    let mut points: Vec<(NetworkParams, Dataset, bool)> = Vec::new();
    let mut seed = 0;
    while points.len() < trained_target && seed < 200 {
        if let Ok(Some((p, d))) = trained_fosp(Dims::new(2, 2, 1), 10, seed) {
            points.push((p, d, true));
        }
        seed += 1;
    }
    let mut cseed = 0;
    while points.len() < budget.scaling_points && cseed < 200 {
        let spec = ConstructionSpec::single(Dims::new(3, 2, 1), 12, SlopePlacement::Interior, 0.3);
        if let Ok(c) = construct_boundary_fosp(&spec, cseed) {
            points.push((c.params, c.data, false));
        }
        cseed += 1;
    }
    let mut worst: f64 = 0.0;
    let mut rank_deficient = 0;
    let mut differentiable = 0;
    let mut literal_t1 = 0;
    let mut failures = Vec::new();
    for (params, data, smooth) in &points {
        let ctx = match PointContext::new(params, data, &SquaredLoss, 0.0, 1e-10) {
            Ok(c) => c,
            Err(e) => {
                failures.push(e.to_string());
                continue;
            }
        };
        let scale = ctx.gradient_scale();
        for k in 0..params.dims().hidden {
            let s = Perturbation::scaling_direction(params, k);
            let s = s.scaled(1.0 / s.norm());
            let t = expansion_terms(&ctx, &s).expect("terms");
            worst = worst.max(t.first.abs() / scale).max(t.second.abs() / scale);
        }
        if *smooth {
            differentiable += 1;
            let zero = SignPattern::zeros(&ctx.boundary);
            let qp = assemble_so_qp(&ctx, &zero, 1e-10).expect("assemble");
            // quadratic form over all directions (no homogeneity rows)
            let free = Matrix::zeros(0, qp.dim());
            let plain = solve_ecqp_pgd(&qp.q, &free, &cfg, 1).expect("pgd");
            let oracle = classify_projected_spectrum(&qp.q, &free, &cfg).expect("oracle");
            let flat_scaling = (0..params.dims().hidden).all(|k| {
                let s = Perturbation::scaling_direction(params, k).to_flat();
                (&qp.q * &s).norm() <= tol::SCALING_TERMS * qp.q_norm().max(1.0) * s.norm()
            });
            if plain.verdict != QpVerdict::T1 && oracle.verdict != QpVerdict::T1 && flat_scaling {
                rank_deficient += 1;
            }
            let constrained = solve_ecqp_pgd(&qp.q, &qp.a, &cfg, 1).expect("pgd");
            if constrained.verdict == QpVerdict::T1 {
                literal_t1 += 1;
            }
        }
    }
    let passed = failures.is_empty()
        && points.len() == budget.scaling_points
        && worst <= tol::SCALING_TERMS
        && rank_deficient == differentiable;
    finish(
        7,
        "scaling directions are flat at stationary points",
        started,
        passed,
        format!(
            "{} points ({differentiable} trained, {} constructed), worst |first|,|second| relative {worst:.2e}; form without homogeneity rows singular and never T1 at {rank_deficient}/{differentiable} differentiable points; with homogeneity rows the equality QP returned T1 at {literal_t1}/{differentiable}{}",
            points.len(),
            points.len() - differentiable,
            failures.first().map(|e| format!("; error: {e}")).unwrap_or_default()
        ),
    )
}

/// Boundary counts of trained networks at desk scale.
pub fn table_trend(budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.adam.iterations = budget.table_iterations;
    cfg.adam.decay_period = budget.table_decay_period;
    match run_many(&cfg, 0, budget.table_runs) {
        Ok(agg) => {
            let avg_m = agg.sum_m as f64 / agg.runs.max(1) as f64;
            let no_flat = agg.reports.iter().filter(|r| r.l_hat == 0).count();
            let ordered = agg.reports.iter().all(|r| r.k_hat <= r.l_hat && r.l_hat <= r.m_hat);
            let needed = (tol::MIN_RUNS_WITHOUT_FLAT * budget.table_runs).div_ceil(10);
            let elapsed = started.elapsed().as_secs_f64();
            finish(
                8,
                "boundary statistics of trained networks",
                started,
                avg_m >= tol::MIN_AVERAGE_BOUNDARY && no_flat >= needed && ordered && elapsed < 600.0,
                format!(
                    "{} runs of {} iterations: Sum M {} (avg {avg_m:.2}), Sum L {}, Sum K {}, L=0 in {no_flat}/{} runs, ordering {}",
                    agg.runs,
                    budget.table_iterations,
                    agg.sum_m,
                    agg.sum_l,
                    agg.sum_k,
                    agg.runs,
                    if ordered { "holds" } else { "violated" }
                ),
            )
        }
        Err(e) => finish(8, "boundary statistics of trained networks", started, false, e.to_string()),
    }
}

/// SOSP, outer-layer descent and second-order descent found, plus any error.
type KnownOutcome = (bool, bool, bool, Option<String>);

/// Zero-loss single-sample networks, their misfit variants, and boundary saddles.
pub fn known_verdicts(budget: &Budget) -> CheckReport {
    let started = Instant::now();
    let cfg = TesterConfig::default();
    let seeds = budget.verdict_seeds as u64;
    let results: Vec<KnownOutcome> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut r = rng(0x90 + seed);
            let dims = Dims::new(r.random_range(1..=3), r.random_range(1..=2), 1);
            let (params, _) = random_point(&mut r, dims, 1, Activation::relu());
            let x = loop {
                let x = gaussian_vec(&mut r, dims.input);
                let pre = &params.w1 * &x + &params.b1;
                if pre.iter().all(|v| v.abs() > 1e-2) {
                    break x;
                }
            };
            let y = forward(&params, &x).expect("forward").output;
            let exact = Dataset::new(vec![x.clone()], vec![y.clone()]).expect("data");
            let shifted = Dataset::new(vec![x], vec![y.add_scalar(1.0)]).expect("data");
            let mut err = None;
            let sosp = match sosp_check(&params, &exact, &SquaredLoss, &cfg) {
                Ok(v) => v.kind == VerdictKind::Sosp,
                Err(e) => {
                    err = Some(e.to_string());
                    false
                }
            };
            let outer = match sosp_check(&params, &shifted, &SquaredLoss, &cfg) {
                Ok(v) => v.kind == VerdictKind::DescentDirection && v.stage == Stage::OuterLayer,
                Err(e) => {
                    err = Some(e.to_string());
                    false
                }
            };
            let saddle = match boundary_saddle(Dims::new(3, 2, 2), 16, 500 + seed) {
                Ok(c) => match sosp_check(&c.params, &c.data, &SquaredLoss, &cfg.clone().with_seed(seed)) {
                    Ok(v) => {
                        let second = matches!(v.stage, Stage::SecondOrderEquality | Stage::SecondOrderInequality { .. });
                        let last_t3 = v.diagnostics.qps.last().is_some_and(|q| q.verdict == QpVerdict::T3);
                        let valid = v
                            .direction
                            .as_ref()
                            .is_some_and(|d| validate_descent(&c.params, &c.data, &SquaredLoss, d).is_ok());
                        v.kind == VerdictKind::DescentDirection && second && last_t3 && valid
                    }
                    Err(e) => {
                        err = Some(e.to_string());
                        false
                    }
                },
                Err(e) => {
                    err = Some(e.to_string());
                    false
                }
            };
            (sosp, outer, saddle, err)
        })
        .collect();
    let count = |f: fn(&KnownOutcome) -> bool| results.iter().filter(|r| f(r)).count();
    let (a, b, c) = (count(|r| r.0), count(|r| r.1), count(|r| r.2));
    let n = results.len();
    let first_error = results.iter().find_map(|r| r.3.clone());
    finish(
        9,
        "known-verdict fixtures",
        started,
        a == n && b == n && c == n,
        format!(
            "zero-loss SOSP {a}/{n}, shifted label outer-layer descent {b}/{n}, boundary saddle second-order descent {c}/{n}{}",
            first_error.map(|e| format!(" (error: {e})")).unwrap_or_default()
        ),
    )
}

/// All checks in order.
pub fn run_all(budget: &Budget) -> Vec<CheckReport> {
    vec![
        expansion_oracle(budget),
        descent_soundness(budget),
        ecqp_cross_oracle(budget),
        copositivity_suite(budget),
        icqp_suite(budget),
        stage_accounting(budget),
        scale_invariance(budget),
        table_trend(budget),
        known_verdicts(budget),
    ]
}

/// Errors that mean the tester contradicted itself rather than bad input.
pub fn is_internal(e: &Error) -> bool {
    matches!(e, Error::NoDecreaseFound { .. })
}
