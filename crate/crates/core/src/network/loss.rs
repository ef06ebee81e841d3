use crate::numerics::{Matrix, Vector};

/// A loss `l(w, y)` that is twice differentiable and convex in the prediction `w`.
pub trait LossModel: Send + Sync {
    fn value(&self, w: &Vector, y: &Vector) -> f64;
    fn gradient(&self, w: &Vector, y: &Vector) -> Vector;
    fn hessian(&self, w: &Vector, y: &Vector) -> Matrix;

    fn name(&self) -> &'static str;
}

/// `l(w, y) = 0.5 * |w - y|^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SquaredLoss;

impl LossModel for SquaredLoss {
    fn value(&self, w: &Vector, y: &Vector) -> f64 {
        0.5 * (w - y).norm_squared()
    }

    fn gradient(&self, w: &Vector, y: &Vector) -> Vector {
        w - y
    }

    fn hessian(&self, w: &Vector, _y: &Vector) -> Matrix {
        Matrix::identity(w.len(), w.len())
    }

    fn name(&self) -> &'static str {
        "squared"
    }
}

/// `l(w, y) = sum_j log cosh(w_j - y_j)`; convex with a non-constant Hessian.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LogCoshLoss;

fn log_cosh(t: f64) -> f64 {
    // log cosh t = |t| + log(1 + e^{-2|t|}) - log 2, stable for large |t|
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl LossModel for LogCoshLoss {
    fn value(&self, w: &Vector, y: &Vector) -> f64 {
        w.iter().zip(y.iter()).map(|(a, b)| log_cosh(a - b)).sum()
    }

    fn gradient(&self, w: &Vector, y: &Vector) -> Vector {
        w.zip_map(y, |a, b| (a - b).tanh())
    }

    fn hessian(&self, w: &Vector, y: &Vector) -> Matrix {
        let d = w.zip_map(y, |a, b| {
            let th = (a - b).tanh();
            1.0 - th * th
        });
        Matrix::from_diagonal(&d)
    }

    fn name(&self) -> &'static str {
        "log_cosh"
    }
}
