//! Second-order test: the quadratic program over flat directions for one
//! sign pattern, and its classification into
//!
//! * T1, strictly positive on the feasible cone except at the origin,
//! * T2, nonnegative with a nonzero flat direction,
//! * T3, some feasible direction has negative curvature.

pub mod assemble;
pub mod copositive;
pub mod ecqp;
pub mod icqp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{asymmetry, ensure_finite, max_abs, rank, Matrix, Vector};

pub use assemble::{assemble_so_qp, jacobian_diagonal, so_objective};
pub use copositive::{copositivity_classify, pareto_spectrum, Copositivity, CpCase, ParetoEigenpair, ParetoSpectrum};
pub use ecqp::{classify_projected_spectrum, log_norm_slope, projected_spectrum_oracle, run_pgd, solve_ecqp_pgd, PgdOutcome, PgdRun, ProjectedSpectrum};
pub use icqp::{classify_psd_block, icqp_reduce, solve_icqp, IcqpReduction, PdCase, PsdBlock};

/// `min eta^T Q eta` subject to `A eta = 0`, `B eta >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeQp {
    pub q: Matrix,
    pub a: Matrix,
    pub b: Matrix,
}

/// Witness thresholds, relative to `|eta|` (and `|Q| |eta|^2` for curvature).
pub const WITNESS_FEASIBILITY_TOL: f64 = 1e-8;
pub const WITNESS_NEGATIVITY_TOL: f64 = 1e-10;
pub const WITNESS_FLATNESS_TOL: f64 = 1e-8;

impl ConeQp {
    /// Checks shapes, finiteness, symmetry and that the rows of `A` and `B`
    /// are jointly linearly independent.
    pub fn new(q: Matrix, a: Matrix, b: Matrix, rank_tol: f64) -> Result<Self> {
        let p = q.nrows();
        if q.ncols() != p || a.ncols() != p || b.ncols() != p {
            return Err(Error::ShapeMismatch(format!(
                "Q is {}x{}, A has {} columns, B has {} columns",
                q.nrows(),
                q.ncols(),
                a.ncols(),
                b.ncols()
            )));
        }
        ensure_finite(&q, "QP matrix Q")?;
        ensure_finite(&a, "QP matrix A")?;
        ensure_finite(&b, "QP matrix B")?;
        let tolerance = 1e-10 * max_abs(&q);
        let asym = asymmetry(&q);
        if asym > tolerance {
            return Err(Error::NonSymmetric {
                asymmetry: asym,
                tolerance,
            });
        }
        let expected = a.nrows() + b.nrows();
        if expected > 0 {
            let stacked = stack_rows(&a, &b);
            let r = rank(&stacked, rank_tol)?;
            if r < expected {
                return Err(Error::RankDeficientConstraints { rank: r, expected });
            }
        }
        Ok(Self { q, a, b })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn equality_count(&self) -> usize {
        self.a.nrows()
    }

    pub fn inequality_count(&self) -> usize {
        self.b.nrows()
    }

    pub fn value(&self, eta: &Vector) -> f64 {
        eta.dot(&(&self.q * eta))
    }

    pub fn q_norm(&self) -> f64 {
        self.q.norm()
    }

    /// `|A eta|` and `max(0, -min B eta)`.
    pub fn feasibility(&self, eta: &Vector) -> (f64, f64) {
        let eq = if self.a.nrows() == 0 {
            0.0
        } else {
            (&self.a * eta).norm()
        };
        let ineq = if self.b.nrows() == 0 {
            0.0
        } else {
            (&self.b * eta).min().min(0.0).abs()
        };
        (eq, ineq)
    }

    /// Feasibility of `eta` against the witness thresholds, with constraint
    /// residuals measured relative to the size of the constraint rows.
    pub fn is_feasible_witness(&self, eta: &Vector) -> bool {
        let n = eta.norm();
        if n == 0.0 {
            return false;
        }
        let (eq, ineq) = self.feasibility(eta);
        let a_scale = self.a.norm().max(1.0);
        let b_scale = self.b.norm().max(1.0);
        eq <= WITNESS_FEASIBILITY_TOL * a_scale * n && ineq <= WITNESS_FEASIBILITY_TOL * b_scale * n
    }

    pub fn is_negative_witness(&self, eta: &Vector) -> bool {
        self.is_feasible_witness(eta)
            && self.value(eta) <= -WITNESS_NEGATIVITY_TOL * self.q_norm() * eta.norm_squared()
    }

    pub fn is_flat_witness(&self, eta: &Vector) -> bool {
        self.is_feasible_witness(eta)
            && self.value(eta).abs() <= WITNESS_FLATNESS_TOL * self.q_norm().max(f64::MIN_POSITIVE) * eta.norm_squared()
    }
}

pub(crate) fn stack_rows(a: &Matrix, b: &Matrix) -> Matrix {
    let p = a.ncols().max(b.ncols());
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), p);
    if a.nrows() > 0 {
        out.rows_mut(0, a.nrows()).copy_from(a);
    }
    if b.nrows() > 0 {
        out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpVerdict {
    T1,
    T2,
    T3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpMethod {
    /// Projected gradient descent on an equality-constrained QP.
    Pgd,
    /// Eigenvalues of `Q` restricted to `null(A)`.
    ProjectedSpectrum,
    /// Elimination to a copositivity test on the inequality block.
    Copositive,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QpDiagnostics {
    pub iterations: usize,
    /// `ln |eta_t|` along the PGD trajectory.
    #[serde(skip)]
    pub log_norms: Vec<f64>,
    /// PGD was inconclusive and the projected-spectrum oracle decided.
    pub fallback: bool,
    pub min_projected_eigenvalue: Option<f64>,
    pub pd_case: Option<PdCase>,
    pub cp_case: Option<CpCase>,
    pub min_pareto_eigenvalue: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpClassification {
    pub verdict: QpVerdict,
    /// T2: nonzero flat direction; T3: feasible direction of negative curvature.
    pub witness: Option<Vector>,
    pub method: QpMethod,
    pub diagnostics: QpDiagnostics,
}

impl QpClassification {
    pub(crate) fn new(verdict: QpVerdict, witness: Option<Vector>, method: QpMethod, diagnostics: QpDiagnostics) -> Self {
        Self {
            verdict,
            witness,
            method,
            diagnostics,
        }
    }
}
