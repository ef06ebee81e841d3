//! First-order stationarity tests.
//!
//! The outer layer is smooth, so its test is a plain gradient check. For a
//! hidden unit with boundary points the Clarke subdifferential of the risk
//! with respect to `v_k` is a box-parameterized set; zero membership is a
//! small convex QP, and the remaining directional condition reduces to a sign
//! test on the `2 M_k` extreme rays of the sign cones.

use serde::{Deserialize, Serialize};

use crate::config::TesterConfig;
use crate::error::{Error, Result};
use crate::network::{Activation, Dims, Perturbation, PointContext};
use crate::numerics::{lambda_max, orthonormal_basis, pseudoinverse, Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub enum FirstOrderOutcome {
    Pass,
    Descent(Perturbation),
}

impl FirstOrderOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, FirstOrderOutcome::Pass)
    }
}

/// Perturbation that moves only `v_k`.
pub fn unit_perturbation(dims: Dims, k: usize, v: &Vector) -> Perturbation {
    let mut eta = Perturbation::zeros(dims);
    eta.set_v_k(k, v);
    eta
}

/// `sum_i grad_i [O(x_i)^T 1]`, a `d_y x (d_h + 1)` matrix.
pub fn outer_layer_gradient(ctx: &PointContext) -> Matrix {
    let dims = ctx.dims();
    let mut g = Matrix::zeros(dims.output, dims.hidden + 1);
    for s in &ctx.samples {
        for k in 0..dims.hidden {
            g.column_mut(k).axpy(s.hidden[k], &s.grad, 1.0);
        }
        g.column_mut(dims.hidden).axpy(1.0, &s.grad, 1.0);
    }
    g
}

fn outer_layer_scale(ctx: &PointContext) -> f64 {
    ctx.samples
        .iter()
        .map(|s| s.grad.norm() * (s.hidden.norm_squared() + 1.0).sqrt())
        .sum::<f64>()
        .max(1.0)
}

pub fn outer_layer_fosp(ctx: &PointContext, tol_zero: f64) -> FirstOrderOutcome {
    let g = outer_layer_gradient(ctx);
    if g.norm() <= tol_zero * outer_layer_scale(ctx) {
        return FirstOrderOutcome::Pass;
    }
    let dims = ctx.dims();
    let mut eta = Perturbation::zeros(dims);
    for k in 0..dims.hidden {
        eta.u.set_column(k, &(-g.column(k)));
    }
    eta.delta2 = -g.column(dims.hidden);
    FirstOrderOutcome::Descent(eta)
}

/// Reference size of the unit-`k` subgradient quantities.
fn unit_scale(ctx: &PointContext, k: usize) -> f64 {
    let w = ctx.params.w2.column(k).norm();
    let slope = ctx.params.activation.upper();
    let total: f64 = ctx
        .samples
        .iter()
        .zip(&ctx.augmented)
        .map(|(s, x)| s.grad.norm() * x.norm())
        .sum();
    (w * slope * total).max(1.0)
}

/// `C_k^T W2[:,k]`, the unit-`k` part of the subgradient that does not depend
/// on the boundary slopes.
pub fn smooth_unit_gradient(ctx: &PointContext, k: usize) -> Vector {
    ctx.boundary.units[k].c.transpose() * ctx.params.w2.column(k)
}

/// First-order test for a unit without boundary points, where the risk is
/// differentiable in `v_k`.
pub fn inner_layer_fosp_smooth(
    ctx: &PointContext,
    k: usize,
    tol_zero: f64,
) -> Result<FirstOrderOutcome> {
    if ctx.boundary.units[k].count() > 0 {
        return Err(Error::UnexpectedBoundary { unit: k });
    }
    let g = smooth_unit_gradient(ctx, k);
    if g.norm() <= tol_zero * unit_scale(ctx, k) {
        return Ok(FirstOrderOutcome::Pass);
    }
    Ok(FirstOrderOutcome::Descent(unit_perturbation(
        ctx.dims(),
        k,
        &(-g),
    )))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxQpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// `|x - clip(x - grad f(x))|`.
    pub kkt_residual: f64,
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

struct BoxLeastSquares<'a> {
    offset: &'a Vector,
    columns: &'a Matrix,
    lo: f64,
    hi: f64,
}

impl BoxLeastSquares<'_> {
    fn residual(&self, x: &Vector) -> Vector {
        self.offset + self.columns * x
    }

    fn objective(&self, x: &Vector) -> f64 {
        self.residual(x).norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.columns.transpose() * self.residual(x) * 2.0
    }

    fn kkt(&self, x: &Vector) -> f64 {
        let g = self.gradient(x);
        x.zip_map(&g, |xi, gi| xi - clip(xi - gi, self.lo, self.hi))
            .norm()
    }

    fn project(&self, x: &mut Vector) {
        x.apply(|v| *v = clip(*v, self.lo, self.hi));
    }
}

/// Minimizes `|offset + columns * x|^2` over the box `[lo, hi]^n`.
///
/// Accelerated projected gradient from the box midpoint, followed by an
/// active-set refinement that solves the free-variable least-squares system
/// exactly. Zero columns keep their midpoint value.
pub fn solve_box_least_squares(
    offset: &Vector,
    columns: &Matrix,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<BoxQpSolution> {
    let n = columns.ncols();
    if columns.nrows() != offset.len() {
        return Err(Error::ShapeMismatch(format!(
            "box QP offset has length {}, columns have {} rows",
            offset.len(),
            columns.nrows()
        )));
    }
    let problem = BoxLeastSquares {
        offset,
        columns,
        lo,
        hi,
    };
    let mut x = Vector::from_element(n, 0.5 * (lo + hi));
    if n == 0 {
        return Ok(BoxQpSolution {
            x: vec![],
            objective: problem.objective(&x),
            iterations: 0,
            kkt_residual: 0.0,
        });
    }
    let gram = columns.transpose() * columns;
    let lipschitz = 2.0 * lambda_max(&gram)?;
    let mut iterations = 0;
    if lipschitz > 0.0 {
        let cap = 50 * n * n + 200;
        let mut y = x.clone();
        let mut t = 1.0_f64;
        while iterations < cap {
            iterations += 1;
            let mut next = &y - problem.gradient(&y) / lipschitz;
            problem.project(&mut next);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &next + (&next - &x) * ((t - 1.0) / t_next);
            x = next;
            t = t_next;
            if problem.kkt(&x) <= tol {
                break;
            }
        }
        polish(&problem, &gram, &mut x)?;
    }
    Ok(BoxQpSolution {
        objective: problem.objective(&x),
        kkt_residual: problem.kkt(&x),
        x: x.iter().copied().collect(),
        iterations,
    })
}

fn polish(problem: &BoxLeastSquares, gram: &Matrix, x: &mut Vector) -> Result<()> {
    let n = x.len();
    for _ in 0..=n {
        let g = problem.gradient(x);
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= problem.lo && g[i] > 0.0) || (x[i] >= problem.hi && g[i] < 0.0)))
            .collect();
        if free.is_empty() {
            break;
        }
        let sub = Matrix::from_fn(free.len(), free.len(), |a, b| gram[(free[a], free[b])]);
        let rhs = Vector::from_fn(free.len(), |a, _| -0.5 * g[free[a]]);
        let step = pseudoinverse(&sub, 1e-12)? * rhs;
        let mut trial = x.clone();
        for (a, &i) in free.iter().enumerate() {
            trial[i] += step[a];
        }
        problem.project(&mut trial);
        let before = problem.objective(x);
        let after = problem.objective(&trial);
        if after <= before && problem.kkt(&trial) <= problem.kkt(x) {
            let unchanged = trial == *x;
            *x = trial;
            if unchanged {
                break;
            }
        } else {
            break;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubdiffQpResult {
    /// One slope per boundary index, in `units[k].indices` order.
    pub s_star: Vec<f64>,
    /// `W2[:,k]^T (C_k + sum_i s*_i grad_i x_i^T)`, as a `(d_x+1)` vector.
    pub residual: Vector,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Reference size used by the zero test.
    pub scale: f64,
}

impl SubdiffQpResult {
    /// Zero lies in the subdifferential of the unit.
    pub fn is_stationary(&self, tol_zero: f64) -> bool {
        self.residual.norm() <= tol_zero * self.scale
    }
}

/// Box QP over the boundary slopes given its ingredients: `smooth` is
/// `C_k^T W2[:,k]`, `weights[j]` is `W2[:,k]^T grad_i` and `points[j]` is
/// `(x_i, 1)` for the `j`-th boundary index.
pub fn solve_subdiff_parts(
    smooth: &Vector,
    weights: &[f64],
    points: &[Vector],
    activation: Activation,
    qp_tol: f64,
) -> Result<SubdiffQpResult> {
    if weights.len() != points.len() {
        return Err(Error::ShapeMismatch(
            "one weight per boundary point is required".into(),
        ));
    }
    let n = smooth.len();
    let mut columns = Matrix::zeros(n, points.len());
    for (j, (w, x)) in weights.iter().zip(points).enumerate() {
        if x.len() != n {
            return Err(Error::ShapeMismatch("boundary point dimension".into()));
        }
        columns.set_column(j, &(x * *w));
    }
    let (lo, hi) = (activation.lower(), activation.upper());
    let scale = (smooth.norm()
        + columns.column_iter().map(|c| c.norm()).sum::<f64>() * hi)
        .max(1.0);
    let sol = solve_box_least_squares(smooth, &columns, lo, hi, qp_tol * scale)?;
    let s = Vector::from_vec(sol.x.clone());
    let residual = smooth + &columns * &s;
    Ok(SubdiffQpResult {
        s_star: sol.x,
        objective: residual.norm_squared(),
        residual,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        scale,
    })
}

pub fn solve_subdiff_qp(ctx: &PointContext, k: usize, qp_tol: f64) -> Result<SubdiffQpResult> {
    let unit = &ctx.boundary.units[k];
    if unit.count() == 0 {
        return Err(Error::NotBoundary { unit: k });
    }
    let smooth = smooth_unit_gradient(ctx, k);
    let weights: Vec<f64> = unit.indices.iter().map(|&i| ctx.unit_gradient(k, i)).collect();
    let points: Vec<Vector> = unit.indices.iter().map(|&i| ctx.augmented[i].clone()).collect();
    solve_subdiff_parts(&smooth, &weights, &points, ctx.params.activation, qp_tol)
}

/// Unit vector in `span(points)` orthogonal to every point except `points[j]`,
/// signed so that its inner product with `points[j]` is positive.
pub fn extreme_ray(points: &[Vector], j: usize, rank_tol: f64) -> Result<Vector> {
    let target = points
        .get(j)
        .ok_or_else(|| Error::ShapeMismatch(format!("no boundary point {j}")))?;
    let others: Vec<Vector> = points
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != j)
        .map(|(_, p)| p.clone())
        .collect();
    let ray = if others.is_empty() {
        target.clone()
    } else {
        let basis = orthonormal_basis(&others, rank_tol)?;
        if basis.ncols() < others.len() {
            return Err(Error::DegenerateGeometry(
                "boundary points are linearly dependent".into(),
            ));
        }
        target - &basis * (basis.transpose() * target)
    };
    let norm = ray.norm();
    if norm <= rank_tol * target.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateGeometry(format!(
            "extreme ray {j} is not one-dimensional"
        )));
    }
    Ok(ray / norm)
}

/// Signs `sigma` for which the extreme ray on side `sigma` of a boundary
/// point is flat.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatSet {
    /// Neither ray is flat; the point contributes an equality constraint.
    Zero,
    Minus,
    Plus,
    Both,
}

impl FlatSet {
    fn from_flags(minus: bool, plus: bool) -> Self {
        match (minus, plus) {
            (false, false) => FlatSet::Zero,
            (true, false) => FlatSet::Minus,
            (false, true) => FlatSet::Plus,
            (true, true) => FlatSet::Both,
        }
    }

    /// Members in increasing order.
    pub fn members(&self) -> &'static [i8] {
        match self {
            FlatSet::Zero => &[0],
            FlatSet::Minus => &[-1],
            FlatSet::Plus => &[1],
            FlatSet::Both => &[-1, 1],
        }
    }

    pub fn contains(&self, sigma: i8) -> bool {
        self.members().contains(&sigma)
    }

    pub fn is_flat(&self) -> bool {
        *self != FlatSet::Zero
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayCheck {
    pub sample: usize,
    /// `W2[:,k]^T grad_i`.
    pub unit_gradient: f64,
    /// Directional derivative along `+v_hat` and `-v_hat`.
    pub products: [f64; 2],
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncreasingCheck {
    /// A ray `v_k` with a strictly negative directional derivative.
    pub descent: Option<Vector>,
    /// One entry per boundary index; empty when a descent ray was found.
    pub flat_sets: Vec<FlatSet>,
    pub rays: Vec<RayCheck>,
}

/// Sign test on both extreme rays `+-v_hat_{i,k}` of every boundary point,
/// given optimal slopes `s_star` from [`solve_subdiff_qp`].
///
/// Along a ray only its own boundary point changes side, so the directional
/// derivative is `(s_sigma - s*_i) (W2[:,k]^T grad_i) (x_i, 1)^T v`.
pub fn increasing_check(
    ctx: &PointContext,
    k: usize,
    s_star: &[f64],
    cfg: &TesterConfig,
) -> Result<IncreasingCheck> {
    let unit = &ctx.boundary.units[k];
    if s_star.len() != unit.count() {
        return Err(Error::ShapeMismatch(format!(
            "{} slopes for {} boundary points",
            s_star.len(),
            unit.count()
        )));
    }
    let points: Vec<Vector> = unit.indices.iter().map(|&i| ctx.augmented[i].clone()).collect();
    let weights: Vec<f64> = unit.indices.iter().map(|&i| ctx.unit_gradient(k, i)).collect();
    ray_sign_test(&points, &weights, s_star, unit.indices.as_slice(), ctx.params.activation, cfg)
}

/// [`increasing_check`] on explicit ingredients.
pub fn ray_sign_test(
    points: &[Vector],
    weights: &[f64],
    s_star: &[f64],
    samples: &[usize],
    activation: Activation,
    cfg: &TesterConfig,
) -> Result<IncreasingCheck> {
    let width = activation.upper() - activation.lower();
    let mut flat_sets = Vec::with_capacity(points.len());
    let mut rays = Vec::with_capacity(points.len());
    for j in 0..points.len() {
        let ray = extreme_ray(points, j, cfg.rank_tol)?;
        let along = points[j].dot(&ray);
        let scale = (weights[j].abs() * along.abs() * width).max(1.0);
        let mut products = [0.0; 2];
        let mut flat = [false; 2];
        for (side, sign) in [1.0_f64, -1.0].into_iter().enumerate() {
            let sigma: i8 = if sign > 0.0 { 1 } else { -1 };
            let product = (activation.slope(sigma) - s_star[j]) * weights[j] * along * sign;
            products[side] = product;
            if product < -cfg.tol_zero * scale {
                rays.push(RayCheck {
                    sample: samples[j],
                    unit_gradient: weights[j],
                    products,
                    scale,
                });
                return Ok(IncreasingCheck {
                    descent: Some(&ray * sign),
                    flat_sets: Vec::new(),
                    rays,
                });
            }
            flat[side] = product.abs() <= cfg.tol_zero * scale;
        }
        rays.push(RayCheck {
            sample: samples[j],
            unit_gradient: weights[j],
            products,
            scale,
        });
        flat_sets.push(FlatSet::from_flags(flat[1], flat[0]));
    }
    Ok(IncreasingCheck {
        descent: None,
        flat_sets,
        rays,
    })
}

/// Which of the three flatness cases a boundary index falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClass {
    /// Both rays flat (`W2[:,k]^T grad_i = 0`).
    DoublyFlat,
    /// Exactly one ray flat (`s*_i` at an end of the slope box).
    SinglyFlat,
    NotFlat,
}

impl From<FlatSet> for BoundaryClass {
    fn from(set: FlatSet) -> Self {
        match set {
            FlatSet::Both => BoundaryClass::DoublyFlat,
            FlatSet::Minus | FlatSet::Plus => BoundaryClass::SinglyFlat,
            FlatSet::Zero => BoundaryClass::NotFlat,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClassification {
    pub classes: Vec<Vec<BoundaryClass>>,
    /// Number of doubly-flat boundary indices.
    pub k: usize,
    /// Number of flat (doubly or singly) boundary indices.
    pub l: usize,
    /// Number of boundary indices.
    pub m: usize,
}

pub fn classify_boundary(flat_sets: &[Vec<FlatSet>]) -> BoundaryClassification {
    let classes: Vec<Vec<BoundaryClass>> = flat_sets
        .iter()
        .map(|sets| sets.iter().map(|&s| BoundaryClass::from(s)).collect())
        .collect();
    let all = || classes.iter().flatten();
    BoundaryClassification {
        k: all().filter(|&&c| c == BoundaryClass::DoublyFlat).count(),
        l: all().filter(|&&c| c != BoundaryClass::NotFlat).count(),
        m: all().count(),
        classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn interior_slope_is_found() {
        let x = v(&[1.0, 0.0]);
        let r = solve_subdiff_parts(&v(&[-0.5, 0.0]), &[1.0], &[x], Activation::relu(), 1e-10).unwrap();
        assert!((r.s_star[0] - 0.5).abs() < 1e-12);
        assert!(r.objective < 1e-20);
        assert!(r.kkt_residual <= 1e-8);
    }

    #[test]
    fn clipped_slope_leaves_residual() {
        let x = v(&[1.0, 0.0]);
        let r = solve_subdiff_parts(&v(&[-2.0, 0.0]), &[1.0], std::slice::from_ref(&x), Activation::relu(), 1e-10).unwrap();
        assert_eq!(r.s_star[0], 1.0);
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert!((&r.residual + &x).norm() < 1e-12);
        assert!(!r.is_stationary(1e-8));
    }

    #[test]
    fn degenerate_qp_is_zero_anywhere() {
        let r = solve_subdiff_parts(&v(&[0.0, 0.0]), &[0.0], &[v(&[1.0, 1.0])], Activation::relu(), 1e-10).unwrap();
        assert_eq!(r.objective, 0.0);
        assert!((0.0..=1.0).contains(&r.s_star[0]));
    }

    #[test]
    fn box_qp_matches_brute_force_grid() {
        // two points, coupled through a shared residual direction
        let points = [v(&[1.0, 0.5, 1.0]), v(&[-0.3, 1.0, 1.0])];
        let weights = [0.8, -1.3];
        let smooth = v(&[0.2, -0.9, 0.4]);
        let act = Activation::leaky(0.2).unwrap();
        let r = solve_subdiff_parts(&smooth, &weights, &points, act, 1e-12).unwrap();
        let mut best = f64::INFINITY;
        let n = 400;
        for a in 0..=n {
            for b in 0..=n {
                let s = [0.2 + 0.8 * a as f64 / n as f64, 0.2 + 0.8 * b as f64 / n as f64];
                let res = &smooth + &points[0] * (weights[0] * s[0]) + &points[1] * (weights[1] * s[1]);
                best = best.min(res.norm_squared());
            }
        }
        assert!(r.objective <= best + 1e-12);
        assert!(r.kkt_residual <= 1e-8);
    }

    #[test]
    fn extreme_ray_examples() {
        let single = extreme_ray(&[v(&[1.0, 0.0, 1.0])], 0, 1e-10).unwrap();
        assert!((single - v(&[1.0, 0.0, 1.0]) / 2f64.sqrt()).norm() < 1e-15);

        let pts = [v(&[1.0, 0.0, 1.0]), v(&[0.0, 1.0, 1.0])];
        let ray = extreme_ray(&pts, 0, 1e-10).unwrap();
        assert!((ray - v(&[2.0, -1.0, 1.0]) / 6f64.sqrt()).norm() < 1e-12);
        assert!(pts[1].dot(&extreme_ray(&pts, 0, 1e-10).unwrap()).abs() < 1e-12);

        let dependent = [v(&[1.0, 0.0]), v(&[2.0, 0.0])];
        assert!(matches!(extreme_ray(&dependent, 0, 1e-10), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn ray_test_cases() {
        let cfg = TesterConfig::default();
        let relu = Activation::relu();
        let pts = [v(&[1.0, 0.0, 1.0]), v(&[0.0, 1.0, 1.0])];

        let zero_weight = ray_sign_test(&pts, &[0.0, 1.0], &[0.5, 0.5], &[0, 1], relu, &cfg).unwrap();
        assert_eq!(zero_weight.flat_sets, vec![FlatSet::Both, FlatSet::Zero]);

        let upper_edge = ray_sign_test(&pts, &[1.0, 1.0], &[1.0, 0.5], &[0, 1], relu, &cfg).unwrap();
        assert_eq!(upper_edge.flat_sets, vec![FlatSet::Plus, FlatSet::Zero]);

        let lower_edge = ray_sign_test(&pts, &[1.0, 1.0], &[0.0, 0.5], &[0, 1], relu, &cfg).unwrap();
        assert_eq!(lower_edge.flat_sets[0], FlatSet::Minus);

        // interior slope with a negative unit gradient: one ray descends
        let descent = ray_sign_test(&pts, &[-1.0, 1.0], &[0.5, 0.5], &[0, 1], relu, &cfg).unwrap();
        let ray = descent.descent.expect("descent ray");
        assert!(pts[1].dot(&ray).abs() < 1e-12);
    }

    #[test]
    fn classification_counts() {
        let c = classify_boundary(&[vec![FlatSet::Zero]]);
        assert_eq!((c.k, c.l), (0, 0));
        let c = classify_boundary(&[vec![FlatSet::Plus]]);
        assert_eq!((c.k, c.l), (0, 1));
        let c = classify_boundary(&[vec![FlatSet::Both], vec![FlatSet::Plus, FlatSet::Zero]]);
        assert_eq!((c.k, c.l, c.m), (1, 2, 3));
    }
}
