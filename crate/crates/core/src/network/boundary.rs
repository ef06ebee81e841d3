use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::derivatives::SampleDerivatives;
use super::params::NetworkParams;
use crate::error::{Error, Result};
use crate::numerics::{orthonormal_basis, rank, Matrix, Vector};

/// Boundary data of one hidden unit `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitBoundary {
    /// Sorted sample indices `i` with `(W1 x_i + b1)_k` on the kink.
    pub indices: Vec<usize>,
    /// Orthonormal basis of `span { (x_i, 1) : i in indices }`, `(d_x+1) x M_k`.
    pub basis: Matrix,
    /// `sum_{i not in indices} h'(preact_ik) grad_i (x_i, 1)^T`, `d_y x (d_x+1)`.
    pub c: Matrix,
}

impl UnitBoundary {
    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn position(&self, i: usize) -> Option<usize> {
        self.indices.binary_search(&i).ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryAnalysis {
    pub units: Vec<UnitBoundary>,
    pub boundary_tol: f64,
}

impl BoundaryAnalysis {
    pub fn total(&self) -> usize {
        self.units.iter().map(UnitBoundary::count).sum()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.units.iter().map(UnitBoundary::count).collect()
    }

    pub fn is_boundary(&self, k: usize, i: usize) -> bool {
        self.units[k].contains(i)
    }

    pub fn is_differentiable(&self) -> bool {
        self.total() == 0
    }
}

/// Indices with `|preact_ik| <= tol`, per hidden unit, without any geometric checks.
pub fn scan_boundary(params: &NetworkParams, data: &Dataset, tol: f64) -> Vec<Vec<usize>> {
    let dh = params.w1.nrows();
    let mut sets = vec![Vec::new(); dh];
    for (i, x) in data.inputs().iter().enumerate() {
        let pre = &params.w1 * x + &params.b1;
        for (k, set) in sets.iter_mut().enumerate() {
            if pre[k].abs() <= tol {
                set.push(i);
            }
        }
    }
    sets
}

/// Boundary index sets, `V_k` bases and `C_k` matrices at the point.
///
/// Fails when the boundary inputs of a unit are affinely dependent, which
/// cannot happen for data in general position.
pub fn boundary_analysis(
    params: &NetworkParams,
    data: &Dataset,
    samples: &[SampleDerivatives],
    boundary_tol: f64,
    rank_tol: f64,
) -> Result<BoundaryAnalysis> {
    if boundary_tol.is_nan() || boundary_tol < 0.0 {
        return Err(Error::ShapeMismatch(format!(
            "boundary tolerance must be nonnegative, got {boundary_tol}"
        )));
    }
    if samples.len() != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} derivative records for {} samples",
            samples.len(),
            data.len()
        )));
    }
    let dims = params.dims();
    let dx = dims.input;
    let mut units = Vec::with_capacity(dims.hidden);
    for k in 0..dims.hidden {
        let mut indices = Vec::new();
        let mut c = Matrix::zeros(dims.output, dx + 1);
        for (i, s) in samples.iter().enumerate() {
            let pre = s.preact[k];
            if pre.abs() <= boundary_tol {
                indices.push(i);
                continue;
            }
            let slope = params.activation.derivative(pre);
            let xbar = data.augmented(i);
            c.ger(slope, &s.grad, &xbar, 1.0);
        }
        if indices.len() > dx {
            return Err(Error::GeneralPositionViolation {
                unit: k,
                reason: format!(
                    "{} boundary points exceed the input dimension {dx}",
                    indices.len()
                ),
            });
        }
        let basis = if indices.is_empty() {
            Matrix::zeros(dx + 1, 0)
        } else {
            let points: Vec<Vector> = indices.iter().map(|&i| data.augmented(i)).collect();
            let r = rank(&Matrix::from_columns(&points), rank_tol)?;
            if r < points.len() {
                return Err(Error::GeneralPositionViolation {
                    unit: k,
                    reason: format!(
                        "augmented boundary inputs {indices:?} have rank {r} < {}",
                        points.len()
                    ),
                });
            }
            orthonormal_basis(&points, rank_tol)?
        };
        units.push(UnitBoundary { indices, basis, c });
    }
    Ok(BoundaryAnalysis {
        units,
        boundary_tol,
    })
}

/// A choice `sigma_{i,k}` in {-1, 0, +1} for every boundary index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignPattern {
    /// `signs[k][j]` belongs to sample `units[k].indices[j]`.
    pub signs: Vec<Vec<i8>>,
}

impl SignPattern {
    pub fn zeros(boundary: &BoundaryAnalysis) -> Self {
        Self {
            signs: boundary.units.iter().map(|u| vec![0; u.count()]).collect(),
        }
    }

    pub fn validate(&self, boundary: &BoundaryAnalysis) -> Result<()> {
        if self.signs.len() != boundary.units.len() {
            return Err(Error::PatternMismatch(format!(
                "{} units in pattern, {} in analysis",
                self.signs.len(),
                boundary.units.len()
            )));
        }
        for (k, (signs, unit)) in self.signs.iter().zip(&boundary.units).enumerate() {
            if signs.len() != unit.count() {
                return Err(Error::PatternMismatch(format!(
                    "unit {k}: {} signs for {} boundary points",
                    signs.len(),
                    unit.count()
                )));
            }
            if signs.iter().any(|s| !(-1..=1).contains(s)) {
                return Err(Error::PatternMismatch(format!(
                    "unit {k}: signs must be -1, 0 or +1"
                )));
            }
        }
        Ok(())
    }

    /// Number of inequality (nonzero) entries.
    pub fn inequality_count(&self) -> usize {
        self.signs.iter().flatten().filter(|&&s| s != 0).count()
    }

    pub fn equality_count(&self) -> usize {
        self.signs.iter().flatten().filter(|&&s| s == 0).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.signs.iter().flatten().all(|&s| s == 0)
    }
}
