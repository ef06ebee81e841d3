use super::ConeQp;
use crate::error::Result;
use crate::network::{Perturbation, PointContext, SignPattern};
use crate::numerics::{Matrix, Vector};

/// Diagonal of the hidden-layer slope matrix `J_i` for a sign pattern:
/// `h'(preact)` off the boundary, `s_sigma` for `sigma = +-1`, zero for `sigma = 0`.
pub fn jacobian_diagonal(ctx: &PointContext, pattern: &SignPattern, i: usize) -> Vec<f64> {
    let act = ctx.params.activation;
    ctx.boundary
        .units
        .iter()
        .enumerate()
        .map(|(k, unit)| match unit.position(i) {
            Some(j) => match pattern.signs[k][j] {
                0 => 0.0,
                sigma => act.slope(sigma),
            },
            None => act.derivative(ctx.samples[i].preact[k]),
        })
        .collect()
}

/// The second-order objective for a sign pattern, evaluated directly:
/// `sum_i grad_i^T dW2 J_i dv_i + 0.5 sum_i |dW2 O_i + db2 + W2 J_i dv_i|^2_{H_i}`
/// where `dv_i = dW1 x_i + db1`.
pub fn so_objective(ctx: &PointContext, pattern: &SignPattern, eta: &Perturbation) -> f64 {
    let mut total = 0.0;
    for i in 0..ctx.len() {
        let s = &ctx.samples[i];
        let j = jacobian_diagonal(ctx, pattern, i);
        let dv = &eta.v * &ctx.augmented[i];
        let jdv = Vector::from_fn(dv.len(), |k, _| j[k] * dv[k]);
        let dy1 = &eta.u * &s.hidden + &eta.delta2 + &ctx.params.w2 * &jdv;
        let dy2 = &eta.u * &jdv;
        total += s.grad.dot(&dy2) + 0.5 * dy1.dot(&(&s.hessian * &dy1));
    }
    total
}

/// Builds `(Q, A, B)` with `eta^T Q eta = 2 * so_objective(eta)`.
///
/// `A` holds one homogeneity row per hidden unit,
/// `W2[:,k]^T u_k - [W1 b1]_k v_k = 0`, followed by `(x_i, 1)^T v_k = 0` for
/// every `sigma_{i,k} = 0`; `B` holds `sigma_{i,k} (x_i, 1)^T v_k >= 0` for the rest.
pub fn assemble_so_qp(ctx: &PointContext, pattern: &SignPattern, rank_tol: f64) -> Result<ConeQp> {
    pattern.validate(&ctx.boundary)?;
    let dims = ctx.dims();
    let p = dims.param_count();
    let (dy, dh) = (dims.output, dims.hidden);
    let w2 = &ctx.params.w2;

    let mut q = Matrix::zeros(p, p);
    let mut coupling = vec![Matrix::zeros(dy, dims.augmented()); dh];
    let mut lin = Matrix::zeros(dy, p);
    for i in 0..ctx.len() {
        let s = &ctx.samples[i];
        let xbar = &ctx.augmented[i];
        let j = jacobian_diagonal(ctx, pattern, i);
        lin.fill(0.0);
        for a in 0..dy {
            lin[(a, a)] = 1.0;
        }
        for k in 0..dh {
            let o = s.hidden[k];
            if o != 0.0 {
                for (a, col) in dims.u_range(k).enumerate() {
                    lin[(a, col)] = o;
                }
            }
            if j[k] != 0.0 {
                let v = dims.v_range(k);
                for a in 0..dy {
                    let w = j[k] * w2[(a, k)];
                    for (b, col) in v.clone().enumerate() {
                        lin[(a, col)] = w * xbar[b];
                    }
                }
                coupling[k].ger(j[k], &s.grad, xbar, 1.0);
            }
        }
        let weighted = &s.hessian * &lin;
        q.gemm_tr(1.0, &lin, &weighted, 1.0);
    }
    for (k, n) in coupling.iter().enumerate() {
        let (u, v) = (dims.u_range(k), dims.v_range(k));
        for (a, row) in u.clone().enumerate() {
            for (b, col) in v.clone().enumerate() {
                q[(row, col)] += n[(a, b)];
                q[(col, row)] += n[(a, b)];
            }
        }
    }
    let q = (&q + q.transpose()) * 0.5;

    let equalities = dh + pattern.equality_count();
    let mut a = Matrix::zeros(equalities, p);
    let mut b = Matrix::zeros(pattern.inequality_count(), p);
    for k in 0..dh {
        for (row, col) in dims.u_range(k).enumerate() {
            a[(k, col)] = w2[(row, k)];
        }
        let incoming = ctx.params.incoming(k);
        for (j, col) in dims.v_range(k).enumerate() {
            a[(k, col)] = -incoming[j];
        }
    }
    let (mut ea, mut eb) = (dh, 0);
    for (k, unit) in ctx.boundary.units.iter().enumerate() {
        let v = dims.v_range(k);
        for (j, &i) in unit.indices.iter().enumerate() {
            let sigma = pattern.signs[k][j];
            let xbar = &ctx.augmented[i];
            if sigma == 0 {
                for (c, col) in v.clone().enumerate() {
                    a[(ea, col)] = xbar[c];
                }
                ea += 1;
            } else {
                for (c, col) in v.clone().enumerate() {
                    b[(eb, col)] = f64::from(sigma) * xbar[c];
                }
                eb += 1;
            }
        }
    }
    ConeQp::new(q, a, b, rank_tol)
}
