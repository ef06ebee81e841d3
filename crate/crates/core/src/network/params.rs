use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Layer widths of a one-hidden-layer network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
        }
    }

    /// Length of an augmented input `(x, 1)`.
    pub fn augmented(&self) -> usize {
        self.input + 1
    }

    /// Number of scalar parameters, `d_y + d_y d_h + d_h (d_x + 1)`.
    pub fn param_count(&self) -> usize {
        self.output + self.output * self.hidden + self.hidden * self.augmented()
    }

    pub fn delta2_range(&self) -> Range<usize> {
        0..self.output
    }

    /// Slice of the flat vector holding `u_k` (column `k` of the output-weight perturbation).
    pub fn u_range(&self, k: usize) -> Range<usize> {
        let start = self.output + k * self.output;
        start..start + self.output
    }

    /// Slice of the flat vector holding `v_k` (row `k` of `[dW1 db1]`).
    pub fn v_range(&self, k: usize) -> Range<usize> {
        let start = self.output + self.output * self.hidden + k * self.augmented();
        start..start + self.augmented()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.output == 0 {
            return Err(Error::ShapeMismatch(format!(
                "all layer widths must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// The point `(W1, b1, W2, b2)` under test.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    /// `d_h x d_x`
    pub w1: Matrix,
    pub b1: Vector,
    /// `d_y x d_h`
    pub w2: Matrix,
    pub b2: Vector,
    pub activation: Activation,
}

impl NetworkParams {
    pub fn new(
        w1: Matrix,
        b1: Vector,
        w2: Matrix,
        b2: Vector,
        activation: Activation,
    ) -> Result<Self> {
        let params = Self {
            w1,
            b1,
            w2,
            b2,
            activation,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros(dims: Dims, activation: Activation) -> Self {
        Self {
            w1: Matrix::zeros(dims.hidden, dims.input),
            b1: Vector::zeros(dims.hidden),
            w2: Matrix::zeros(dims.output, dims.hidden),
            b2: Vector::zeros(dims.output),
            activation,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.w1.ncols(), self.w1.nrows(), self.w2.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        dims.validate()?;
        if self.b1.len() != dims.hidden
            || self.w2.ncols() != dims.hidden
            || self.b2.len() != dims.output
        {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent parameter shapes: W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                self.w1.nrows(),
                self.w1.ncols(),
                self.b1.len(),
                self.w2.nrows(),
                self.w2.ncols(),
                self.b2.len()
            )));
        }
        let finite = self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                context: "network parameters",
            });
        }
        Ok(())
    }

    /// Row `k` of `[W1 b1]`.
    pub fn incoming(&self, k: usize) -> Vector {
        let dx = self.w1.ncols();
        Vector::from_fn(dx + 1, |j, _| if j < dx { self.w1[(k, j)] } else { self.b1[k] })
    }

    /// Column `k` of `W2`.
    pub fn outgoing(&self, k: usize) -> Vector {
        self.w2.column(k).into_owned()
    }

    /// `z + t * eta`.
    pub fn perturbed(&self, eta: &Perturbation, t: f64) -> NetworkParams {
        let dx = self.w1.ncols();
        let mut next = self.clone();
        next.b2.axpy(t, &eta.delta2, 1.0);
        next.w2.zip_apply(&eta.u, |w, d| *w += t * d);
        for k in 0..self.w1.nrows() {
            for j in 0..dx {
                next.w1[(k, j)] += t * eta.v[(k, j)];
            }
            next.b1[k] += t * eta.v[(k, dx)];
        }
        next
    }

    /// Inverse of [`NetworkParams::to_flat`].
    pub fn from_flat(dims: Dims, activation: Activation, flat: &Vector) -> Result<Self> {
        let blocks = Perturbation::from_flat(dims, flat)?;
        let dx = dims.input;
        Self::new(
            blocks.v.columns(0, dx).into_owned(),
            blocks.v.column(dx).into_owned(),
            blocks.u,
            blocks.delta2,
            activation,
        )
    }

    /// Flat parameter vector in the same layout as [`Perturbation::to_flat`].
    pub fn to_flat(&self) -> Vector {
        let dx = self.w1.ncols();
        let v = Matrix::from_fn(self.w1.nrows(), dx + 1, |k, j| {
            if j < dx {
                self.w1[(k, j)]
            } else {
                self.b1[k]
            }
        });
        Perturbation {
            delta2: self.b2.clone(),
            u: self.w2.clone(),
            v,
        }
        .to_flat()
    }
}

/// A direction `eta = (delta2, u_1..u_dh, v_1..v_dh)` in parameter space.
///
/// `u` is `d_y x d_h` (column `k` is `u_k`); `v` is `d_h x (d_x+1)` (row `k` is `v_k`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PerturbationRows", try_from = "PerturbationRows")]
pub struct Perturbation {
    pub delta2: Vector,
    pub u: Matrix,
    pub v: Matrix,
}

impl Perturbation {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            delta2: Vector::zeros(dims.output),
            u: Matrix::zeros(dims.output, dims.hidden),
            v: Matrix::zeros(dims.hidden, dims.augmented()),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.v.ncols().saturating_sub(1), self.v.nrows(), self.delta2.len())
    }

    pub fn from_flat(dims: Dims, flat: &Vector) -> Result<Self> {
        if flat.len() != dims.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "flat perturbation has length {}, expected {}",
                flat.len(),
                dims.param_count()
            )));
        }
        let mut eta = Self::zeros(dims);
        eta.delta2.copy_from(&flat.rows_range(dims.delta2_range()));
        for k in 0..dims.hidden {
            let r = dims.u_range(k);
            eta.u.column_mut(k).copy_from(&flat.rows_range(r));
            let r = dims.v_range(k);
            for (j, idx) in r.enumerate() {
                eta.v[(k, j)] = flat[idx];
            }
        }
        Ok(eta)
    }

    pub fn to_flat(&self) -> Vector {
        let dims = self.dims();
        let mut flat = Vector::zeros(dims.param_count());
        flat.rows_range_mut(dims.delta2_range()).copy_from(&self.delta2);
        for k in 0..dims.hidden {
            flat.rows_range_mut(dims.u_range(k)).copy_from(&self.u.column(k));
            for (j, idx) in dims.v_range(k).enumerate() {
                flat[idx] = self.v[(k, j)];
            }
        }
        flat
    }

    pub fn v_k(&self, k: usize) -> Vector {
        self.v.row(k).transpose()
    }

    pub fn set_v_k(&mut self, k: usize, value: &Vector) {
        self.v.row_mut(k).copy_from(&value.transpose());
    }

    pub fn norm(&self) -> f64 {
        (self.delta2.norm_squared() + self.u.norm_squared() + self.v.norm_squared()).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.delta2.iter().chain(self.u.iter()).chain(self.v.iter()).all(|&x| x == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            delta2: &self.delta2 * factor,
            u: &self.u * factor,
            v: &self.v * factor,
        }
    }

    /// Direction that grows row `k` of `[W1 b1]` and shrinks column `k` of `W2`,
    /// leaving the network function unchanged to first order.
    pub fn scaling_direction(params: &NetworkParams, k: usize) -> Self {
        let mut eta = Self::zeros(params.dims());
        eta.u.column_mut(k).copy_from(&(-params.w2.column(k)));
        eta.set_v_k(k, &params.incoming(k));
        eta
    }
}

/// Row-major form of a [`Perturbation`] for serialization.
#[derive(Serialize, Deserialize)]
struct PerturbationRows {
    delta2: Vec<f64>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], ncols: usize) -> std::result::Result<Matrix, String> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<Perturbation> for PerturbationRows {
    fn from(p: Perturbation) -> Self {
        Self {
            delta2: p.delta2.iter().copied().collect(),
            u: matrix_rows(&p.u),
            v: matrix_rows(&p.v),
        }
    }
}

impl TryFrom<PerturbationRows> for Perturbation {
    type Error = String;

    fn try_from(rows: PerturbationRows) -> std::result::Result<Self, String> {
        let hidden = rows.v.len();
        let u_cols = rows.u.first().map_or(hidden, Vec::len);
        let v_cols = rows.v.first().map_or(0, Vec::len);
        let u = rows_matrix(&rows.u, u_cols)?;
        let v = rows_matrix(&rows.v, v_cols)?;
        if u.nrows() != rows.delta2.len() || u.ncols() != hidden {
            return Err("perturbation blocks have inconsistent shapes".into());
        }
        Ok(Self {
            delta2: Vector::from_vec(rows.delta2),
            u,
            v,
        })
    }
}
