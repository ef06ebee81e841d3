use super::params::Perturbation;
use super::point::PointContext;
use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Directional first- and second-order terms of the risk at `z` along `eta`.
///
/// For small enough `t > 0`,
/// `R(z + t eta) = R(z) + t * first + t^2 * second + o(t^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionTerms {
    pub first: f64,
    pub second: f64,
}

/// Output perturbations `(dY1, dY2)` of sample `i`, with the hidden-layer
/// slopes resolved by the direction on boundary entries.
pub fn output_perturbations(ctx: &PointContext, eta: &Perturbation, i: usize) -> (Vector, Vector) {
    let params = ctx.params;
    let sample = &ctx.samples[i];
    let xbar = &ctx.augmented[i];
    let dh = params.w1.nrows();
    let mut dy1 = &eta.u * &sample.hidden + &eta.delta2;
    let mut dy2 = Vector::zeros(eta.delta2.len());
    for k in 0..dh {
        let lin = eta.v.row(k).transpose().dot(xbar);
        if lin == 0.0 {
            continue;
        }
        let slope = if ctx.boundary.is_boundary(k, i) {
            params.activation.derivative(lin)
        } else {
            params.activation.derivative(sample.preact[k])
        };
        let scaled = slope * lin;
        dy1.axpy(scaled, &params.w2.column(k), 1.0);
        dy2.axpy(scaled, &eta.u.column(k), 1.0);
    }
    (dy1, dy2)
}

pub fn expansion_terms(ctx: &PointContext, eta: &Perturbation) -> Result<ExpansionTerms> {
    if eta.dims() != ctx.dims() {
        return Err(Error::ShapeMismatch(format!(
            "perturbation has dims {:?}, network {:?}",
            eta.dims(),
            ctx.dims()
        )));
    }
    let mut first = 0.0;
    let mut second = 0.0;
    for i in 0..ctx.len() {
        let (dy1, dy2) = output_perturbations(ctx, eta, i);
        let s = &ctx.samples[i];
        first += s.grad.dot(&dy1);
        second += s.grad.dot(&dy2) + 0.5 * dy1.dot(&(&s.hessian * &dy1));
    }
    Ok(ExpansionTerms { first, second })
}
