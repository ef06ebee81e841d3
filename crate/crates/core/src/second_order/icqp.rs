//! Inequality-constrained QPs: eliminate `A eta = 0`, change variables so the
//! inequalities become `nu_1 >= 0`, then decide the sign of
//! `nu^T R nu = nu_1^T R11 nu_1 + 2 nu_1^T R12 nu_2 + nu_2^T R22 nu_2`
//! from the spectrum of `R22` and the copositivity of its Schur complement.

use serde::{Deserialize, Serialize};

use super::copositive::{copositivity_classify, CpCase};
use super::{ConeQp, QpClassification, QpDiagnostics, QpMethod, QpVerdict};
use crate::config::TesterConfig;
use crate::error::{Error, Result};
use crate::numerics::{max_abs, pseudoinverse, sym_eig, Matrix, Vector};

/// Column indices chosen by Gaussian elimination with complete pivoting,
/// in pivot order; their submatrix is invertible.
fn pivot_columns(m: &Matrix, rank_tol: f64) -> Result<Vec<usize>> {
    let (rows, cols) = m.shape();
    let mut work = m.clone();
    let threshold = rank_tol * max_abs(m);
    let mut used_rows = vec![false; rows];
    let mut used_cols = vec![false; cols];
    let mut chosen = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut best = (0.0, usize::MAX, usize::MAX);
        for i in (0..rows).filter(|&i| !used_rows[i]) {
            for j in (0..cols).filter(|&j| !used_cols[j]) {
                let v = work[(i, j)].abs();
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        let (value, pi, pj) = best;
        if value <= threshold || pi == usize::MAX {
            return Err(Error::RankDeficient {
                context: "constraint elimination found no usable pivot",
            });
        }
        used_rows[pi] = true;
        used_cols[pj] = true;
        chosen.push(pj);
        let pivot_row = work.row(pi).into_owned();
        for i in (0..rows).filter(|&i| !used_rows[i]) {
            let factor = work[(i, pj)] / value.copysign(work[(pi, pj)]);
            if factor != 0.0 {
                for j in 0..cols {
                    work[(i, j)] -= factor * pivot_row[j];
                }
            }
        }
    }
    Ok(chosen)
}

/// Basis `Z` (columns) of `null(M)` obtained by solving for the pivot
/// columns; `M Z = 0` and the free coordinates of `Z` form an identity.
fn elimination_lift(m: &Matrix, rank_tol: f64) -> Result<(Matrix, Vec<usize>, Vec<usize>)> {
    let cols = m.ncols();
    let pivots = pivot_columns(m, rank_tol)?;
    let free: Vec<usize> = (0..cols).filter(|j| !pivots.contains(j)).collect();
    let mut lift = Matrix::zeros(cols, free.len());
    for (c, &j) in free.iter().enumerate() {
        lift[(j, c)] = 1.0;
    }
    if !pivots.is_empty() {
        let m1 = Matrix::from_fn(m.nrows(), pivots.len(), |i, c| m[(i, pivots[c])]);
        let m2 = Matrix::from_fn(m.nrows(), free.len(), |i, c| m[(i, free[c])]);
        let solved = m1.lu().solve(&m2).ok_or(Error::RankDeficient {
            context: "pivot block is singular",
        })?;
        for (c, &j) in pivots.iter().enumerate() {
            for f in 0..free.len() {
                lift[(j, f)] = -solved[(c, f)];
            }
        }
    }
    Ok((lift, pivots, free))
}

/// The ICQP in reduced coordinates: `eta = lift * nu`, feasible iff the
/// first `r` coordinates of `nu` are nonnegative, and
/// `eta^T Q eta = nu^T R nu` with `R = [[r11, r12], [r12^T, r22]]`.
#[derive(Clone, Debug)]
pub struct IcqpReduction {
    pub lift: Matrix,
    pub r: usize,
    pub r11: Matrix,
    pub r12: Matrix,
    pub r22: Matrix,
    /// Columns of `A` eliminated by the first change of variables.
    pub equality_pivots: Vec<usize>,
    /// Columns (of the reduced `B`) taken as the invertible block.
    pub inequality_pivots: Vec<usize>,
}

impl IcqpReduction {
    pub fn lift(&self, nu: &Vector) -> Vector {
        &self.lift * nu
    }

    pub fn join(&self, nu1: &Vector, nu2: &Vector) -> Vector {
        let mut nu = Vector::zeros(nu1.len() + nu2.len());
        nu.rows_mut(0, nu1.len()).copy_from(nu1);
        nu.rows_mut(nu1.len(), nu2.len()).copy_from(nu2);
        nu
    }

    pub fn reduced_matrix(&self) -> Matrix {
        let n = self.r + self.r22.nrows();
        let mut m = Matrix::zeros(n, n);
        m.view_mut((0, 0), (self.r, self.r)).copy_from(&self.r11);
        m.view_mut((0, self.r), self.r12.shape()).copy_from(&self.r12);
        m.view_mut((self.r, 0), (self.r12.ncols(), self.r)).copy_from(&self.r12.transpose());
        m.view_mut((self.r, self.r), self.r22.shape()).copy_from(&self.r22);
        m
    }

    pub fn reduced_value(&self, nu: &Vector) -> f64 {
        nu.dot(&(self.reduced_matrix() * nu))
    }
}

pub fn icqp_reduce(qp: &ConeQp, rank_tol: f64) -> Result<IcqpReduction> {
    let r = qp.inequality_count();
    if r == 0 {
        return Err(Error::NoInequalities);
    }
    let p = qp.dim();
    let (lift_a, equality_pivots) = if qp.equality_count() == 0 {
        (Matrix::identity(p, p), Vec::new())
    } else {
        let (z, piv, _) = elimination_lift(&qp.a, rank_tol)?;
        (z, piv)
    };
    let b_bar = &qp.b * &lift_a;
    let n = b_bar.ncols();
    let inequality_pivots = pivot_columns(&b_bar, rank_tol)?;
    let free: Vec<usize> = (0..n).filter(|j| !inequality_pivots.contains(j)).collect();
    let b1 = Matrix::from_fn(r, r, |i, c| b_bar[(i, inequality_pivots[c])]);
    let b1_inv = b1.try_inverse().ok_or(Error::RankDeficient {
        context: "inequality pivot block is singular",
    })?;
    let b2 = Matrix::from_fn(r, free.len(), |i, c| b_bar[(i, free[c])]);
    let coupling = &b1_inv * &b2;
    // w = T nu with w[pivots] = B1^{-1} (nu_1 - B2 nu_2), w[free] = nu_2
    let mut lift_b = Matrix::zeros(n, n);
    for (c, &j) in inequality_pivots.iter().enumerate() {
        for a in 0..r {
            lift_b[(j, a)] = b1_inv[(c, a)];
        }
        for f in 0..free.len() {
            lift_b[(j, r + f)] = -coupling[(c, f)];
        }
    }
    for (f, &j) in free.iter().enumerate() {
        lift_b[(j, r + f)] = 1.0;
    }
    let lift = lift_a * lift_b;
    let reduced = lift.transpose() * &qp.q * &lift;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let n2 = n - r;
    Ok(IcqpReduction {
        r11: reduced.view((0, 0), (r, r)).into_owned(),
        r12: reduced.view((0, r), (r, n2)).into_owned(),
        r22: reduced.view((r, r), (n2, n2)).into_owned(),
        lift,
        r,
        equality_pivots,
        inequality_pivots,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdCase {
    /// `R22` positive definite (or empty).
    Pd1,
    /// PSD, singular, `null(R22)` inside `null(R12)`.
    Pd2,
    /// PSD, singular, some null vector of `R22` is not annihilated by `R12`.
    Pd3,
    /// `R22` has a negative eigenvalue.
    Pd4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub case: PdCase,
    /// PD2: a null vector; PD3: a null vector with `R12 nu_2 != 0`; PD4: a
    /// direction of negative curvature.
    pub witness: Option<Vector>,
    pub min_eigenvalue: Option<f64>,
}

/// Eigenvalues with magnitude at most `tol` count as zero.
pub fn classify_psd_block(r22: &Matrix, r12: &Matrix, tol: f64) -> Result<PsdBlock> {
    if r22.nrows() == 0 {
        return Ok(PsdBlock {
            case: PdCase::Pd1,
            witness: None,
            min_eigenvalue: None,
        });
    }
    let eig = sym_eig(r22)?;
    let lowest = eig.min().unwrap_or(0.0);
    let column = |j: usize| eig.eigenvectors.column(j).into_owned();
    if lowest < -tol {
        return Ok(PsdBlock {
            case: PdCase::Pd4,
            witness: Some(column(0)),
            min_eigenvalue: Some(lowest),
        });
    }
    let zeros: Vec<usize> = (0..eig.len()).filter(|&j| eig.eigenvalues[j].abs() <= tol).collect();
    if zeros.is_empty() {
        return Ok(PsdBlock {
            case: PdCase::Pd1,
            witness: None,
            min_eigenvalue: Some(lowest),
        });
    }
    let mut best = (0.0, zeros[0]);
    for &j in &zeros {
        let leak = if r12.nrows() == 0 { 0.0 } else { (r12 * column(j)).norm() };
        if leak > best.0 {
            best = (leak, j);
        }
    }
    let case = if best.0 > tol { PdCase::Pd3 } else { PdCase::Pd2 };
    Ok(PsdBlock {
        case,
        witness: Some(column(best.1)),
        min_eigenvalue: Some(lowest),
    })
}

/// Negative direction for PD3: `nu_1 = e_i`, `nu_2 = t * nu_2` with the sign
/// of `t` making the cross term negative.
fn pd3_direction(red: &IcqpReduction, nu2: &Vector, scale: f64) -> Option<Vector> {
    let leak = &red.r12 * nu2;
    let curvature = nu2.dot(&(&red.r22 * nu2));
    let mut order: Vec<usize> = (0..red.r).collect();
    order.sort_by(|&a, &b| leak[b].abs().total_cmp(&leak[a].abs()));
    for i in order {
        let c = leak[i];
        if c == 0.0 {
            break;
        }
        let a = red.r11[(i, i)];
        let t = if curvature <= 0.0 { -(a.abs() + scale) / (2.0 * c) } else { -c / curvature };
        let value = a + 2.0 * t * c + t * t * curvature;
        if value < 0.0 {
            let mut nu1 = Vector::zeros(red.r);
            nu1[i] = 1.0;
            return Some(red.join(&nu1, &(nu2 * t)));
        }
    }
    None
}

pub fn solve_icqp(qp: &ConeQp, cfg: &TesterConfig) -> Result<QpClassification> {
    let r = qp.inequality_count();
    if r == 0 {
        return Err(Error::NoInequalities);
    }
    if r > cfg.max_pareto_order {
        return Err(Error::SubsetBudgetExceeded {
            order: r,
            max: cfg.max_pareto_order,
        });
    }
    let red = icqp_reduce(qp, cfg.rank_tol)?;
    let mut diag = QpDiagnostics::default();
    let reduced_scale = red.reduced_matrix().norm();
    let tol = cfg.spectral_tol * reduced_scale;
    let block = classify_psd_block(&red.r22, &red.r12, tol)?;
    diag.pd_case = Some(block.case);
    diag.min_projected_eigenvalue = block.min_eigenvalue;

    let negative = |nu: &Vector| -> Option<Vector> {
        let eta = red.lift(nu);
        let n = eta.norm();
        (n > 0.0 && qp.is_negative_witness(&eta)).then(|| eta / n)
    };

    match block.case {
        PdCase::Pd4 => {
            let nu2 = block.witness.clone().expect("PD4 carries a witness");
            let nu = red.join(&Vector::zeros(r), &nu2);
            if let Some(eta) = negative(&nu) {
                return Ok(QpClassification::new(QpVerdict::T3, Some(eta), QpMethod::Copositive, diag));
            }
            diag.flags.push("negative R22 direction failed re-verification".into());
        }
        PdCase::Pd3 => {
            let nu2 = block.witness.clone().expect("PD3 carries a witness");
            match pd3_direction(&red, &nu2, reduced_scale.max(f64::MIN_POSITIVE)) {
                Some(nu) => {
                    if let Some(eta) = negative(&nu) {
                        return Ok(QpClassification::new(QpVerdict::T3, Some(eta), QpMethod::Copositive, diag));
                    }
                    diag.flags.push("PD3 direction failed re-verification".into());
                }
                None => diag.flags.push("no nonnegative nu_1 found for PD3; used Schur complement".into()),
            }
        }
        PdCase::Pd1 | PdCase::Pd2 => {}
    }

    let r22_pinv = pseudoinverse(&red.r22, cfg.spectral_tol)?;
    let schur = &red.r11 - &red.r12 * &r22_pinv * red.r12.transpose();
    let schur = (&schur + schur.transpose()) * 0.5;
    let cop = copositivity_classify(&schur, cfg.spectral_tol, cfg.pos_tol, cfg.max_pareto_order)?;
    diag.cp_case = Some(cop.case);
    diag.min_pareto_eigenvalue = cop.min_value.is_finite().then_some(cop.min_value);
    if cop.spectrum.degenerate {
        diag.flags.push("repeated eigenvalues in a principal submatrix of the Schur complement".into());
    }
    let complete = |nu1: &Vector| {
        let nu2 = -(&r22_pinv * red.r12.transpose() * nu1);
        red.join(nu1, &nu2)
    };

    if cop.case == CpCase::Cp3 {
        let nu = complete(cop.witness.as_ref().expect("CP3 carries a witness"));
        if let Some(eta) = negative(&nu) {
            return Ok(QpClassification::new(QpVerdict::T3, Some(eta), QpMethod::Copositive, diag));
        }
        diag.flags.push("negative Schur direction failed re-verification".into());
    }
    if block.case == PdCase::Pd1 && cop.case == CpCase::Cp1 {
        return Ok(QpClassification::new(QpVerdict::T1, None, QpMethod::Copositive, diag));
    }

    let mut candidates = Vec::new();
    if let (PdCase::Pd2, Some(nu2)) = (block.case, &block.witness) {
        candidates.push(red.join(&Vector::zeros(r), nu2));
    }
    if let Some(w) = &cop.witness {
        candidates.push(complete(w));
    }
    if let Some(nu2) = &block.witness {
        candidates.push(red.join(&Vector::zeros(r), nu2));
    }
    let witness = candidates
        .iter()
        .map(|nu| red.lift(nu))
        .filter(|eta| eta.norm() > 0.0)
        .map(|eta| {
            let n = eta.norm();
            eta / n
        })
        .min_by(|x, y| qp.value(x).abs().total_cmp(&qp.value(y).abs()));
    match &witness {
        Some(eta) if qp.is_flat_witness(eta) => {}
        _ => diag.flags.push("flat witness outside the flatness tolerance".into()),
    }
    Ok(QpClassification::new(QpVerdict::T2, witness, QpMethod::Copositive, diag))
}
