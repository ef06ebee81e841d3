//! Copositivity of small symmetric matrices through the Pareto spectrum.
//!
//! `lambda` is a Pareto eigenvalue of `S` when some principal submatrix
//! `S^J` has an eigenvector `xi` with strictly positive entries and
//! `sum_{j in J} S_ij xi_j >= 0` for every row `i` outside `J`. `S` is
//! copositive iff all Pareto eigenvalues are nonnegative, and strictly
//! copositive iff all are positive. Enumerating every `J` costs `O(r^3 2^r)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{max_abs, sym_eig, Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct ParetoEigenpair {
    pub lambda: f64,
    /// Unit vector, nonnegative, zero outside `subset`.
    pub vector: Vector,
    pub subset: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParetoSpectrum {
    pub pairs: Vec<ParetoEigenpair>,
    /// Some principal submatrix had a repeated eigenvalue, so combinations of
    /// eigenvectors were also tried.
    pub degenerate: bool,
}

impl ParetoSpectrum {
    /// Distinct Pareto eigenvalues (within `tol`), ascending.
    pub fn values(&self, tol: f64) -> Vec<f64> {
        let mut vals: Vec<f64> = self.pairs.iter().map(|p| p.lambda).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup_by(|a, b| (*a - *b).abs() <= tol);
        vals
    }

    /// Pair with the smallest eigenvalue; the first one found wins ties.
    pub fn min_pair(&self) -> Option<&ParetoEigenpair> {
        self.pairs
            .iter()
            .fold(None, |best: Option<&ParetoEigenpair>, p| match best {
                Some(b) if b.lambda <= p.lambda => Some(b),
                _ => Some(p),
            })
    }
}

fn submatrix(s: &Matrix, subset: &[usize]) -> Matrix {
    Matrix::from_fn(subset.len(), subset.len(), |a, b| s[(subset[a], subset[b])])
}

fn normalized(v: Vector) -> Option<Vector> {
    let n = v.norm();
    (n > 0.0).then(|| v / n)
}

pub fn pareto_spectrum(s: &Matrix, pos_tol: f64, max_order: usize) -> Result<ParetoSpectrum> {
    let r = s.nrows();
    if s.ncols() != r {
        return Err(Error::ShapeMismatch("Pareto spectrum needs a square matrix".into()));
    }
    if r > max_order || r >= usize::BITS as usize {
        return Err(Error::SubsetBudgetExceeded {
            order: r,
            max: max_order,
        });
    }
    let scale = max_abs(s);
    let row_tol = pos_tol * scale;
    let gap_tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut pairs = Vec::new();
    let mut degenerate = false;
    for mask in 1usize..(1 << r) {
        let subset: Vec<usize> = (0..r).filter(|&j| mask & (1 << j) != 0).collect();
        let sub = submatrix(s, &subset);
        let eig = sym_eig(&sub)?;
        let n = subset.len();
        let mut candidates: Vec<Vector> = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && eig.eigenvalues[end] - eig.eigenvalues[end - 1] <= gap_tol {
                end += 1;
            }
            for a in start..end {
                candidates.push(eig.eigenvectors.column(a).into_owned());
            }
            if end - start > 1 {
                degenerate = true;
                for a in start..end {
                    for b in (a + 1)..end {
                        let va = eig.eigenvectors.column(a);
                        let vb = eig.eigenvectors.column(b);
                        for c in [va + vb, va - vb] {
                            if let Some(c) = normalized(c) {
                                candidates.push(-&c);
                                candidates.push(c);
                            }
                        }
                    }
                }
                // projection of the all-ones vector onto the eigenspace
                let block = eig.eigenvectors.columns(start, end - start);
                let ones = Vector::from_element(n, 1.0);
                if let Some(c) = normalized(block * (block.transpose() * &ones)) {
                    candidates.push(c);
                }
            }
            start = end;
        }
        for xi in candidates {
            if xi.iter().any(|&x| x <= pos_tol) {
                continue;
            }
            let complementary = (0..r).filter(|i| mask & (1 << i) == 0).all(|i| {
                let row: f64 = subset.iter().zip(xi.iter()).map(|(&j, &x)| s[(i, j)] * x).sum();
                row >= -row_tol
            });
            if !complementary {
                continue;
            }
            let lambda = xi.dot(&(&sub * &xi));
            let mut vector = Vector::zeros(r);
            for (&j, &x) in subset.iter().zip(xi.iter()) {
                vector[j] = x;
            }
            pairs.push(ParetoEigenpair {
                lambda,
                vector,
                subset: subset.clone(),
            });
        }
    }
    Ok(ParetoSpectrum { pairs, degenerate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpCase {
    /// Strictly copositive.
    Cp1,
    /// Copositive with a nonzero nonnegative zero.
    Cp2,
    /// Not copositive.
    Cp3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Copositivity {
    pub case: CpCase,
    /// Pareto eigenvector of the smallest Pareto eigenvalue (CP2 and CP3).
    pub witness: Option<Vector>,
    pub min_value: f64,
    pub spectrum: ParetoSpectrum,
}

/// Pareto eigenvalues within `spectral_tol * max|S_ij|` of zero count as zero.
pub fn copositivity_classify(
    s: &Matrix,
    spectral_tol: f64,
    pos_tol: f64,
    max_order: usize,
) -> Result<Copositivity> {
    let spectrum = pareto_spectrum(s, pos_tol, max_order)?;
    let tol = spectral_tol * max_abs(s);
    let (case, witness, min_value) = match spectrum.min_pair() {
        // an empty spectrum only happens for r = 0, which is vacuously strictly copositive
        None => (CpCase::Cp1, None, f64::INFINITY),
        Some(pair) if pair.lambda < -tol => (CpCase::Cp3, Some(pair.vector.clone()), pair.lambda),
        Some(pair) if pair.lambda <= tol => (CpCase::Cp2, Some(pair.vector.clone()), pair.lambda),
        Some(pair) => (CpCase::Cp1, None, pair.lambda),
    };
    Ok(Copositivity {
        case,
        witness,
        min_value,
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, xs: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, r, xs)
    }

    #[test]
    fn diagonal_spectrum() {
        let spec = pareto_spectrum(&m(2, &[2.0, 0.0, 0.0, 5.0]), 1e-9, 20).unwrap();
        assert_eq!(spec.values(1e-12), vec![2.0, 5.0]);
    }

    #[test]
    fn off_diagonal_spectrum() {
        let spec = pareto_spectrum(&m(2, &[0.0, 1.0, 1.0, 0.0]), 1e-9, 20).unwrap();
        let vals = spec.values(1e-12);
        assert_eq!(vals.len(), 2);
        assert!(vals[0].abs() < 1e-15 && (vals[1] - 1.0).abs() < 1e-15);
        let c = copositivity_classify(&m(2, &[0.0, 1.0, 1.0, 0.0]), 1e-9, 1e-9, 20).unwrap();
        assert_eq!(c.case, CpCase::Cp2);
        assert_eq!(c.witness.unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn identity_spectrum() {
        for r in 1..=4 {
            let spec = pareto_spectrum(&Matrix::identity(r, r), 1e-9, 20).unwrap();
            let vals = spec.values(1e-12);
            assert_eq!(vals.len(), 1);
            assert!((vals[0] - 1.0).abs() < 1e-12);
            let c = copositivity_classify(&Matrix::identity(r, r), 1e-9, 1e-9, 20).unwrap();
            assert_eq!(c.case, CpCase::Cp1);
        }
    }

    #[test]
    fn not_copositive() {
        let s = m(2, &[1.0, -3.0, -3.0, 1.0]);
        let c = copositivity_classify(&s, 1e-9, 1e-9, 20).unwrap();
        assert_eq!(c.case, CpCase::Cp3);
        let w = c.witness.unwrap();
        assert!((w[0] - w[1]).abs() < 1e-12);
        let ones = Vector::from_element(2, 1.0);
        assert!((ones.dot(&(&s * &ones)) + 4.0).abs() < 1e-12);
        assert!((c.min_value + 2.0).abs() < 1e-12);
    }

    #[test]
    fn budget() {
        assert!(matches!(
            pareto_spectrum(&Matrix::identity(3, 3), 1e-9, 2),
            Err(Error::SubsetBudgetExceeded { order: 3, max: 2 })
        ));
    }
}
