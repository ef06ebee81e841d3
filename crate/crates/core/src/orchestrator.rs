//! The full certification pipeline: first-order tests on both layers, the
//! extreme-ray sign test per unit, then the second-order QPs (one
//! equality-constrained QP for the all-zero pattern, and one
//! inequality-constrained QP per sign pattern when flat rays exist).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TesterConfig;
use crate::error::{Error, Result};
use crate::first_order::{
    classify_boundary, increasing_check, inner_layer_fosp_smooth, outer_layer_fosp, solve_subdiff_qp,
    unit_perturbation, FirstOrderOutcome, FlatSet,
};
use crate::network::{
    empirical_risk, expansion_terms, BoundaryAnalysis, Dataset, LossModel, NetworkParams, Perturbation, PointContext,
    SignPattern,
};
use crate::numerics::Vector;
use crate::second_order::{assemble_so_qp, solve_ecqp_pgd, solve_icqp, QpClassification, QpMethod, QpVerdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    LocalMinimum,
    Sosp,
    DescentDirection,
}

/// A step of the pipeline, in execution order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "stage")]
pub enum Stage {
    OuterLayer,
    InnerLayerSmooth { unit: usize },
    InnerLayerSubdifferential { unit: usize },
    ExtremeRay { unit: usize },
    SecondOrderEquality,
    SecondOrderInequality { pattern: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpKind {
    Ecqp,
    Icqp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpRecord {
    pub kind: QpKind,
    pub pattern: SignPattern,
    pub verdict: QpVerdict,
    pub method: QpMethod,
    pub iterations: usize,
    pub fallback: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub boundary_count: usize,
    pub indices: Vec<usize>,
    /// Optimal boundary slopes (empty for units without boundary points).
    pub s_star: Vec<f64>,
    /// Squared norm of the smallest subgradient found for the unit.
    pub qp_objective: Option<f64>,
    pub flat_sets: Vec<FlatSet>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub units: Vec<UnitRecord>,
    /// Doubly-flat boundary indices.
    pub k: usize,
    /// Flat boundary indices.
    pub l: usize,
    /// Boundary indices.
    pub m: usize,
    pub qps: Vec<QpRecord>,
    pub trace: Vec<Stage>,
    pub ecqp_count: usize,
    pub icqp_count: usize,
    /// Smallest `first / |eta|` over random feasible-looking directions,
    /// sampled once the structured first-order tests pass.
    pub sampled_min_first_order: Option<f64>,
    /// Expansion terms of the flat witness (SOSP verdicts).
    pub flat_first: Option<f64>,
    pub flat_second: Option<f64>,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Validated descent direction.
    pub direction: Option<Perturbation>,
    /// Step size at which the descent was confirmed.
    pub step: Option<f64>,
    /// Stage that produced the verdict; the last stage run otherwise.
    pub stage: Stage,
    /// Nonzero flat direction (SOSP verdicts).
    pub flat_witness: Option<Perturbation>,
    pub diagnostics: Diagnostics,
}

/// SplitMix64 finalizer of `seed + index`, used to give each QP its own stream.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Every pattern in the product of the per-index flat sets, with `Zero`
/// sets contributing `0`. Odometer order over boundary indices (unit-major),
/// the last index varying fastest and `-1` before `+1`.
pub fn enumerate_sign_patterns(
    boundary: &BoundaryAnalysis,
    flat_sets: &[Vec<FlatSet>],
    max_doubly_flat: usize,
) -> Result<Vec<SignPattern>> {
    if flat_sets.len() != boundary.units.len()
        || flat_sets.iter().zip(&boundary.units).any(|(s, u)| s.len() != u.count())
    {
        return Err(Error::PatternMismatch("one flat set per boundary index is required".into()));
    }
    let doubly = flat_sets.iter().flatten().filter(|&&s| s == FlatSet::Both).count();
    if doubly > max_doubly_flat {
        return Err(Error::PatternBudgetExceeded {
            count: doubly,
            max: max_doubly_flat,
        });
    }
    let slots: Vec<(usize, usize)> = flat_sets
        .iter()
        .enumerate()
        .flat_map(|(k, sets)| (0..sets.len()).map(move |j| (k, j)))
        .collect();
    let mut digits = vec![0usize; slots.len()];
    let mut patterns = Vec::with_capacity(1 << doubly);
    loop {
        let mut pattern = SignPattern::zeros(boundary);
        for (&(k, j), &d) in slots.iter().zip(&digits) {
            pattern.signs[k][j] = flat_sets[k][j].members()[d];
        }
        patterns.push(pattern);
        let mut pos = slots.len();
        loop {
            if pos == 0 {
                return Ok(patterns);
            }
            pos -= 1;
            let (k, j) = slots[pos];
            digits[pos] += 1;
            if digits[pos] < flat_sets[k][j].members().len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Backtracking check that `eta` decreases the risk: the first
/// `gamma = 1e-2 * 2^-j`, `j = 0..=40`, with
/// `R(z + gamma eta) < R(z) - 1e-14 max(1, R(z))`.
pub fn validate_descent(
    params: &NetworkParams,
    data: &Dataset,
    loss: &dyn LossModel,
    eta: &Perturbation,
) -> Result<f64> {
    if eta.is_zero() {
        return Err(Error::ZeroDirection);
    }
    let base = empirical_risk(params, data, loss)?;
    let target = base - 1e-14 * base.abs().max(1.0);
    let mut gamma = 1e-2;
    for _ in 0..=40 {
        if empirical_risk(&params.perturbed(eta, gamma), data, loss)? < target {
            return Ok(gamma);
        }
        gamma *= 0.5;
    }
    Err(Error::NoDecreaseFound {
        stage: "backtracking".into(),
    })
}

struct Run<'a> {
    ctx: PointContext<'a>,
    cfg: &'a TesterConfig,
    diag: Diagnostics,
    started: Instant,
}

impl<'a> Run<'a> {
    fn descent(mut self, stage: Stage, eta: Perturbation) -> Result<Verdict> {
        let step = validate_descent(self.ctx.params, self.ctx.data, self.ctx.loss, &eta).map_err(|e| match e {
            Error::NoDecreaseFound { .. } => Error::NoDecreaseFound {
                stage: format!("{stage:?}"),
            },
            other => other,
        })?;
        self.diag.elapsed_seconds = self.started.elapsed().as_secs_f64();
        Ok(Verdict {
            kind: VerdictKind::DescentDirection,
            direction: Some(eta),
            step: Some(step),
            stage,
            flat_witness: None,
            diagnostics: self.diag,
        })
    }

    fn record(&mut self, kind: QpKind, pattern: &SignPattern, c: &QpClassification) {
        self.diag.qps.push(QpRecord {
            kind,
            pattern: pattern.clone(),
            verdict: c.verdict,
            method: c.method,
            iterations: c.diagnostics.iterations,
            fallback: c.diagnostics.fallback,
            flags: c.diagnostics.flags.clone(),
        });
        match kind {
            QpKind::Ecqp => self.diag.ecqp_count += 1,
            QpKind::Icqp => self.diag.icqp_count += 1,
        }
    }

    fn witness(&self, c: &QpClassification) -> Result<Option<Perturbation>> {
        c.witness
            .as_ref()
            .map(|w| Perturbation::from_flat(self.ctx.dims(), w))
            .transpose()
    }

    fn sample_first_order(&self) -> Result<Option<f64>> {
        let n = self.cfg.random_direction_samples;
        if n == 0 {
            return Ok(None);
        }
        let dims = self.ctx.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, u64::MAX));
        let mut lowest = f64::INFINITY;
        for _ in 0..n {
            let flat = Vector::from_fn(dims.param_count(), |_, _| rng.sample(StandardNormal));
            let eta = Perturbation::from_flat(dims, &flat)?;
            let first = expansion_terms(&self.ctx, &eta)?.first / eta.norm();
            lowest = lowest.min(first);
        }
        Ok(Some(lowest))
    }
}

/// Runs the pipeline and returns a verdict; any descent direction it reports
/// has been confirmed by [`validate_descent`].
pub fn sosp_check(
    params: &NetworkParams,
    data: &Dataset,
    loss: &dyn LossModel,
    cfg: &TesterConfig,
) -> Result<Verdict> {
    let started = Instant::now();
    let ctx = PointContext::new(params, data, loss, cfg.boundary_tol, cfg.rank_tol)?;
    let dims = ctx.dims();
    let mut run = Run {
        ctx,
        cfg,
        diag: Diagnostics::default(),
        started,
    };

    run.diag.trace.push(Stage::OuterLayer);
    if let FirstOrderOutcome::Descent(eta) = outer_layer_fosp(&run.ctx, cfg.tol_zero) {
        return run.descent(Stage::OuterLayer, eta);
    }

    let mut s_stars = Vec::with_capacity(dims.hidden);
    for k in 0..dims.hidden {
        let unit = &run.ctx.boundary.units[k];
        let mut record = UnitRecord {
            boundary_count: unit.count(),
            indices: unit.indices.clone(),
            ..UnitRecord::default()
        };
        if unit.count() == 0 {
            let stage = Stage::InnerLayerSmooth { unit: k };
            run.diag.trace.push(stage.clone());
            run.diag.units.push(record);
            if let FirstOrderOutcome::Descent(eta) = inner_layer_fosp_smooth(&run.ctx, k, cfg.tol_zero)? {
                return run.descent(stage, eta);
            }
            s_stars.push(Vec::new());
        } else {
            let stage = Stage::InnerLayerSubdifferential { unit: k };
            run.diag.trace.push(stage.clone());
            let qp = solve_subdiff_qp(&run.ctx, k, cfg.qp_tol)?;
            record.s_star = qp.s_star.clone();
            record.qp_objective = Some(qp.objective);
            run.diag.units.push(record);
            if !qp.is_stationary(cfg.tol_zero) {
                let eta = unit_perturbation(dims, k, &(-&qp.residual));
                return run.descent(stage, eta);
            }
            s_stars.push(qp.s_star);
        }
    }

    let mut flat_sets = Vec::with_capacity(dims.hidden);
    for k in 0..dims.hidden {
        if run.ctx.boundary.units[k].count() == 0 {
            flat_sets.push(Vec::new());
            continue;
        }
        let stage = Stage::ExtremeRay { unit: k };
        run.diag.trace.push(stage.clone());
        let check = increasing_check(&run.ctx, k, &s_stars[k], cfg)?;
        if let Some(v) = check.descent {
            return run.descent(stage, unit_perturbation(dims, k, &v));
        }
        run.diag.units[k].flat_sets = check.flat_sets.clone();
        flat_sets.push(check.flat_sets);
    }
    let classes = classify_boundary(&flat_sets);
    run.diag.k = classes.k;
    run.diag.l = classes.l;
    run.diag.m = classes.m;
    run.diag.sampled_min_first_order = run.sample_first_order()?;

    let mut flat_witness: Option<Perturbation> = None;
    let zero = SignPattern::zeros(&run.ctx.boundary);
    run.diag.trace.push(Stage::SecondOrderEquality);
    let qp = assemble_so_qp(&run.ctx, &zero, cfg.rank_tol)?;
    let ecqp = solve_ecqp_pgd(&qp.q, &qp.a, cfg, sub_seed(cfg.seed, 0))?;
    run.record(QpKind::Ecqp, &zero, &ecqp);
    match ecqp.verdict {
        QpVerdict::T3 => {
            let eta = run.witness(&ecqp)?.ok_or(Error::ZeroDirection)?;
            return run.descent(Stage::SecondOrderEquality, eta);
        }
        QpVerdict::T2 => flat_witness = run.witness(&ecqp)?,
        QpVerdict::T1 => {}
    }
    let mut last_stage = Stage::SecondOrderEquality;
    let mut any_flat = ecqp.verdict == QpVerdict::T2;

    if classes.l > 0 {
        let patterns = enumerate_sign_patterns(&run.ctx.boundary, &flat_sets, cfg.max_doubly_flat)?;
        let solve = |pattern: &SignPattern| -> Result<QpClassification> {
            let qp = assemble_so_qp(&run.ctx, pattern, cfg.rank_tol)?;
            solve_icqp(&qp, cfg)
        };
        let results: Vec<Result<QpClassification>> = if cfg.parallel_patterns {
            patterns.par_iter().map(solve).collect()
        } else {
            let mut out = Vec::with_capacity(patterns.len());
            for p in &patterns {
                let r = solve(p);
                let stop = matches!(&r, Ok(c) if c.verdict == QpVerdict::T3) || r.is_err();
                out.push(r);
                if stop {
                    break;
                }
            }
            out
        };
        for (index, (pattern, result)) in patterns.iter().zip(results).enumerate() {
            let stage = Stage::SecondOrderInequality { pattern: index };
            run.diag.trace.push(stage.clone());
            let c = result?;
            run.record(QpKind::Icqp, pattern, &c);
            match c.verdict {
                QpVerdict::T3 => {
                    let eta = run.witness(&c)?.ok_or(Error::ZeroDirection)?;
                    return run.descent(stage, eta);
                }
                QpVerdict::T2 => {
                    any_flat = true;
                    if flat_witness.is_none() {
                        flat_witness = run.witness(&c)?;
                    }
                }
                QpVerdict::T1 => {}
            }
            last_stage = stage;
        }
    }

    let kind = if any_flat {
        VerdictKind::Sosp
    } else {
        VerdictKind::LocalMinimum
    };
    if let Some(w) = &flat_witness {
        let terms = expansion_terms(&run.ctx, w)?;
        run.diag.flat_first = Some(terms.first);
        run.diag.flat_second = Some(terms.second);
    }
    run.diag.elapsed_seconds = run.started.elapsed().as_secs_f64();
    Ok(Verdict {
        kind,
        direction: None,
        step: None,
        stage: last_stage,
        flat_witness,
        diagnostics: run.diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, BoundaryAnalysis, UnitBoundary};
    use crate::numerics::Matrix;

    fn analysis(counts: &[usize]) -> BoundaryAnalysis {
        BoundaryAnalysis {
            units: counts
                .iter()
                .map(|&c| UnitBoundary {
                    indices: (0..c).collect(),
                    basis: Matrix::zeros(2, c),
                    c: Matrix::zeros(1, 2),
                })
                .collect(),
            boundary_tol: 0.0,
        }
    }

    #[test]
    fn pattern_products() {
        let b = analysis(&[2]);
        let p = enumerate_sign_patterns(&b, &[vec![FlatSet::Zero, FlatSet::Zero]], 16).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].is_all_zero());

        let b = analysis(&[1]);
        let p = enumerate_sign_patterns(&b, &[vec![FlatSet::Both]], 16).unwrap();
        let signs: Vec<_> = p.iter().map(|p| p.signs[0][0]).collect();
        assert_eq!(signs, vec![-1, 1]);

        let b = analysis(&[1, 1]);
        let p = enumerate_sign_patterns(&b, &[vec![FlatSet::Both], vec![FlatSet::Plus]], 16).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|p| p.signs[1][0] == 1));
    }

    #[test]
    fn pattern_budget() {
        let b = analysis(&[3]);
        let sets = vec![vec![FlatSet::Both; 3]];
        assert_eq!(enumerate_sign_patterns(&b, &sets, 3).unwrap().len(), 8);
        assert!(matches!(
            enumerate_sign_patterns(&b, &sets, 2),
            Err(Error::PatternBudgetExceeded { count: 3, max: 2 })
        ));
    }

    #[test]
    fn zero_direction_rejected() {
        let params = NetworkParams::zeros(crate::network::Dims::new(1, 1, 1), Activation::relu());
        let data = Dataset::new(vec![Vector::from_element(1, 1.0)], vec![Vector::from_element(1, 1.0)]).unwrap();
        let eta = Perturbation::zeros(params.dims());
        assert!(matches!(
            validate_descent(&params, &data, &crate::network::SquaredLoss, &eta),
            Err(Error::ZeroDirection)
        ));
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(0, 0), sub_seed(0, 1));
        assert_eq!(sub_seed(5, 3), sub_seed(5, 3));
    }
}
