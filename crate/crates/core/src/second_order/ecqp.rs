use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{QpClassification, QpDiagnostics, QpMethod, QpVerdict};
use crate::config::{PgdConfig, TesterConfig};
use crate::error::{Error, Result};
use crate::numerics::{lambda_max, nullspace_basis, row_projector, sym_eig, EigenDecomposition, Matrix, Vector};

fn check_shapes(q: &Matrix, a: &Matrix) -> Result<()> {
    if q.nrows() != q.ncols() || a.ncols() != q.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "Q is {}x{}, A has {} columns",
            q.nrows(),
            q.ncols(),
            a.ncols()
        )));
    }
    Ok(())
}

/// `W^T Q W` for an orthonormal basis `W` of `null(A)`.
#[derive(Clone, Debug)]
pub struct ProjectedSpectrum {
    pub basis: Matrix,
    pub eigen: EigenDecomposition,
}

pub fn projected_spectrum_oracle(q: &Matrix, a: &Matrix, rank_tol: f64) -> Result<ProjectedSpectrum> {
    check_shapes(q, a)?;
    let basis = nullspace_basis(a, rank_tol)?;
    let reduced = basis.transpose() * q * &basis;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eigen = sym_eig(&reduced)?;
    Ok(ProjectedSpectrum { basis, eigen })
}

/// Classification of an equality-constrained QP from the projected spectrum.
/// Eigenvalues within `spectral_tol * rho(Q)` of zero count as zero.
pub fn classify_projected_spectrum(q: &Matrix, a: &Matrix, cfg: &TesterConfig) -> Result<QpClassification> {
    let spec = projected_spectrum_oracle(q, a, cfg.rank_tol)?;
    let mut diag = QpDiagnostics::default();
    if spec.eigen.is_empty() {
        return Ok(QpClassification::new(QpVerdict::T1, None, QpMethod::ProjectedSpectrum, diag));
    }
    let tol = cfg.spectral_tol * sym_eig(q)?.spectral_radius();
    let lowest = spec.eigen.min().unwrap_or(0.0);
    diag.min_projected_eigenvalue = Some(lowest);
    let column = |j: usize| &spec.basis * spec.eigen.eigenvectors.column(j);
    let (verdict, witness) = if lowest < -tol {
        (QpVerdict::T3, Some(column(0)))
    } else if lowest <= tol {
        (QpVerdict::T2, Some(column(0)))
    } else {
        (QpVerdict::T1, None)
    };
    Ok(QpClassification::new(verdict, witness, QpMethod::ProjectedSpectrum, diag))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgdOutcome {
    /// Iterates shrank to zero.
    Converged,
    /// Iterates stalled at a nonzero point.
    FixedPoint,
    /// Iterates blew up along negative curvature.
    Diverged,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct PgdRun {
    pub outcome: PgdOutcome,
    pub iterate: Vector,
    pub iterations: usize,
    pub log_norms: Vec<f64>,
}

/// `eta <- P (I - alpha Q) eta` from a seeded Gaussian start projected onto `null(A)`.
pub fn run_pgd(q: &Matrix, projector: &Matrix, cfg: &PgdConfig, seed: u64) -> Result<PgdRun> {
    let p = q.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Vector::from_fn(p, |_, _| rng.sample(StandardNormal));
    let mut eta = projector * start;
    let norm0 = eta.norm();
    if norm0 == 0.0 {
        return Ok(PgdRun {
            outcome: PgdOutcome::Converged,
            iterate: eta,
            iterations: 0,
            log_norms: vec![],
        });
    }
    let top = lambda_max(q)?;
    let alpha = if top > 0.0 { cfg.step_fraction / top } else { 1.0 };
    let step = projector * (Matrix::identity(p, p) - q * alpha);
    let mut log_norms = Vec::with_capacity(cfg.max_iters.min(1 << 14) + 1);
    log_norms.push(norm0.ln());
    for it in 1..=cfg.max_iters {
        let next = &step * &eta;
        let norm = next.norm();
        let moved = (&next - &eta).norm();
        let prev_norm = eta.norm();
        eta = next;
        log_norms.push(norm.ln());
        let finish = |outcome, eta: Vector, log_norms| {
            Ok(PgdRun {
                outcome,
                iterate: eta,
                iterations: it,
                log_norms,
            })
        };
        if norm > cfg.divergence_factor * norm0 {
            if eta.dot(&(q * &eta)) < 0.0 {
                return finish(PgdOutcome::Diverged, eta, log_norms);
            }
            return finish(PgdOutcome::Inconclusive, eta, log_norms);
        }
        if norm < cfg.convergence_factor * norm0 {
            return finish(PgdOutcome::Converged, eta, log_norms);
        }
        if moved <= cfg.fixed_point_tol * prev_norm && norm >= cfg.fixed_point_floor * norm0 {
            return finish(PgdOutcome::FixedPoint, eta, log_norms);
        }
    }
    Ok(PgdRun {
        outcome: PgdOutcome::Inconclusive,
        iterate: eta,
        iterations: cfg.max_iters,
        log_norms,
    })
}

/// Least-squares slope of `log_norms` over its second half.
pub fn log_norm_slope(log_norms: &[f64]) -> f64 {
    let tail = &log_norms[log_norms.len() / 2..];
    let n = tail.len() as f64;
    if tail.len() < 2 {
        return 0.0;
    }
    let mean_t = (n - 1.0) / 2.0;
    let mean_y = tail.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in tail.iter().enumerate() {
        let dt = t as f64 - mean_t;
        num += dt * (y - mean_y);
        den += dt * dt;
    }
    num / den
}

/// Equality-constrained QP classified by projected gradient descent, with
/// the projected-spectrum oracle as fallback when PGD is inconclusive.
pub fn solve_ecqp_pgd(q: &Matrix, a: &Matrix, cfg: &TesterConfig, seed: u64) -> Result<QpClassification> {
    check_shapes(q, a)?;
    let mut diag = QpDiagnostics::default();
    let projector = match row_projector(a) {
        Ok(p) => p,
        Err(Error::RankDeficient { .. }) => {
            diag.flags.push("row projector ill-conditioned; used null-space basis".into());
            let w = nullspace_basis(a, cfg.rank_tol)?;
            &w * w.transpose()
        }
        Err(e) => return Err(e),
    };
    let run = run_pgd(q, &projector, &cfg.pgd, seed)?;
    diag.iterations = run.iterations;
    let q_norm = q.norm();
    let eta = &run.iterate;
    let value = eta.dot(&(q * eta));
    let n2 = eta.norm_squared();
    let conclusive = match run.outcome {
        PgdOutcome::Converged => Some((QpVerdict::T1, None)),
        PgdOutcome::Diverged if value <= -super::WITNESS_NEGATIVITY_TOL * q_norm * n2 => {
            Some((QpVerdict::T3, Some(eta / eta.norm())))
        }
        PgdOutcome::FixedPoint if value.abs() <= super::WITNESS_FLATNESS_TOL * q_norm.max(f64::MIN_POSITIVE) * n2 => {
            Some((QpVerdict::T2, Some(eta / eta.norm())))
        }
        _ => None,
    };
    diag.log_norms = run.log_norms;
    if let Some((verdict, witness)) = conclusive {
        return Ok(QpClassification::new(verdict, witness, QpMethod::Pgd, diag));
    }
    let mut oracle = classify_projected_spectrum(q, a, cfg)?;
    oracle.diagnostics.iterations = diag.iterations;
    oracle.diagnostics.log_norms = diag.log_norms;
    oracle.diagnostics.fallback = true;
    oracle.diagnostics.flags.extend(diag.flags);
    oracle
        .diagnostics
        .flags
        .push(format!("PGD inconclusive ({:?}); projected spectrum decided", run.outcome));
    Ok(oracle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(xs: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(xs))
    }

    fn row(xs: &[f64]) -> Matrix {
        Matrix::from_row_slice(1, xs.len(), xs)
    }

    #[test]
    fn pgd_examples() {
        let cfg = TesterConfig::default();
        let a = row(&[1.0, 0.0]);

        let r = solve_ecqp_pgd(&diag(&[1.0, 1.0]), &a, &cfg, 1).unwrap();
        assert_eq!((r.verdict, r.method), (QpVerdict::T1, QpMethod::Pgd));

        let r = solve_ecqp_pgd(&diag(&[1.0, -1.0]), &a, &cfg, 1).unwrap();
        assert_eq!(r.verdict, QpVerdict::T3);
        let w = r.witness.unwrap();
        assert!(w[0].abs() < 1e-12 && (w[1].abs() - 1.0).abs() < 1e-12);
        assert!(log_norm_slope(&r.diagnostics.log_norms) > 0.0);

        let r = solve_ecqp_pgd(&diag(&[1.0, 0.0]), &a, &cfg, 1).unwrap();
        assert_eq!(r.verdict, QpVerdict::T2);
        let w = r.witness.unwrap();
        assert!(w[0].abs() < 1e-12 && (w[1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_example() {
        let spec = projected_spectrum_oracle(&diag(&[3.0, 5.0]), &row(&[1.0, 0.0]), 1e-10).unwrap();
        assert_eq!(spec.eigen.eigenvalues.as_slice(), &[5.0]);
    }

    #[test]
    fn trivial_null_space_is_t1() {
        let cfg = TesterConfig::default();
        let r = solve_ecqp_pgd(&diag(&[-1.0]), &row(&[1.0]), &cfg, 0).unwrap();
        assert_eq!(r.verdict, QpVerdict::T1);
        let r = classify_projected_spectrum(&diag(&[-1.0]), &row(&[1.0]), &cfg).unwrap();
        assert_eq!(r.verdict, QpVerdict::T1);
    }

    #[test]
    fn negative_definite_without_constraints_diverges() {
        let cfg = TesterConfig::default();
        let r = solve_ecqp_pgd(&diag(&[-1.0, -2.0]), &Matrix::zeros(0, 2), &cfg, 3).unwrap();
        assert_eq!(r.verdict, QpVerdict::T3);
        let r = solve_ecqp_pgd(&Matrix::zeros(2, 2), &Matrix::zeros(0, 2), &cfg, 3).unwrap();
        assert_eq!(r.verdict, QpVerdict::T2);
    }

    #[test]
    fn slope_of_line() {
        let ys: Vec<f64> = (0..20).map(|t| 0.5 * t as f64 - 3.0).collect();
        assert!((log_norm_slope(&ys) - 0.5).abs() < 1e-12);
    }
}
