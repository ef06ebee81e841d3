//! Dense linear-algebra primitives.
//!
//! Thin, contract-checked wrappers over `nalgebra`. Every routine rejects
//! NaN/Inf, and every rank decision goes through a relative threshold
//! (`rank_tol`) so callers can audit what "numerically zero" means.
//! Outputs are canonicalized (ascending eigenvalues, sign-fixed vectors)
//! so that golden tests are deterministic.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative rank threshold.
pub const RANK_TOL: f64 = 1e-10;

/// Relative symmetry tolerance used by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Condition number above which `A A^T` is considered singular.
pub const PROJECTOR_CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Sorted ascending.
    pub eigenvalues: Vector,
    /// Column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn min(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().next()
    }

    pub fn max(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().last()
    }

    /// Largest eigenvalue magnitude, zero for an empty decomposition.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn reconstruct(&self) -> Matrix {
        let scaled = &self.eigenvectors * Matrix::from_diagonal(&self.eigenvalues);
        scaled * self.eigenvectors.transpose()
    }
}

pub fn ensure_finite(m: &Matrix, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

pub fn ensure_finite_vec(v: &Vector, context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute entry of `m - m^T`.
pub fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn ensure_symmetric(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let tolerance = SYMMETRY_TOL * max_abs(m);
    let asym = asymmetry(m);
    if asym > tolerance {
        return Err(Error::NonSymmetric {
            asymmetry: asym,
            tolerance,
        });
    }
    Ok(())
}

/// Flip `v` so that its largest-magnitude component is positive.
/// Ties between equal magnitudes go to the lowest index.
pub fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best * (1.0 + 1e-12) {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn canonicalize_columns(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        canonicalize_sign(col.as_mut_slice());
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues and sign-canonical
/// eigenvectors.
pub fn sym_eig(m: &Matrix) -> Result<EigenDecomposition> {
    ensure_finite(m, "sym_eig input")?;
    ensure_symmetric(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: Vector::zeros(0),
            eigenvectors: Matrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = Vector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonicalize_columns(&mut eigenvectors);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Numerical rank from singular values, relative to the largest one.
pub fn rank(m: &Matrix, rank_tol: f64) -> Result<usize> {
    ensure_finite(m, "rank input")?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let top = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rank_tol * top).count())
}

/// Orthonormal basis (as columns) of the span of `m`'s columns.
pub fn column_space_basis(m: &Matrix, rank_tol: f64) -> Result<Matrix> {
    ensure_finite(m, "column space input")?;
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let top = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    if top == 0.0 {
        return Ok(Matrix::zeros(n, 0));
    }
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&j| svd.singular_values[j] > rank_tol * top)
        .collect();
    let mut basis = Matrix::zeros(n, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        basis.set_column(dst, &u.column(src));
    }
    canonicalize_columns(&mut basis);
    Ok(basis)
}

/// Orthonormal basis of `span(vectors)`; the column count is the numerical rank.
pub fn orthonormal_basis(vectors: &[Vector], rank_tol: f64) -> Result<Matrix> {
    let first = vectors
        .first()
        .ok_or(Error::EmptyInput("orthonormal_basis needs at least one vector"))?;
    let dim = first.len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::ShapeMismatch(
            "orthonormal_basis vectors differ in dimension".into(),
        ));
    }
    let stacked = Matrix::from_columns(vectors);
    column_space_basis(&stacked, rank_tol)
}

/// Orthonormal basis of the null space of `m` (columns), `cols(m) - rank(m)` wide.
pub fn nullspace_basis(m: &Matrix, rank_tol: f64) -> Result<Matrix> {
    ensure_finite(m, "nullspace input")?;
    let n = m.ncols();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if m.nrows() == 0 {
        return Ok(Matrix::identity(n, n));
    }
    let row_basis = column_space_basis(&m.transpose(), rank_tol)?;
    let r = row_basis.ncols();
    if r == n {
        return Ok(Matrix::zeros(n, 0));
    }
    // The complement projector has eigenvalues exactly 0 or 1, so the split is
    // well separated regardless of how ill-conditioned `m` was.
    let complement = Matrix::identity(n, n) - &row_basis * row_basis.transpose();
    let eig = sym_eig(&symmetrize(&complement))?;
    let mut basis = Matrix::zeros(n, n - r);
    for (dst, src) in (r..n).enumerate() {
        basis.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonicalize_columns(&mut basis);
    Ok(basis)
}

/// Moore-Penrose pseudoinverse of a symmetric matrix; eigenvalues with
/// magnitude below `rank_tol * max|eigenvalue|` are treated as zero.
pub fn pseudoinverse(m: &Matrix, rank_tol: f64) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    let n = eig.len();
    let cutoff = rank_tol * eig.spectral_radius();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let lambda = eig.eigenvalues[j];
        if lambda.abs() > cutoff && lambda != 0.0 {
            let v = eig.eigenvectors.column(j);
            inv += (v * v.transpose()) / lambda;
        }
    }
    Ok(symmetrize(&inv))
}

/// Orthogonal projector `I - A^T (A A^T)^{-1} A` onto `null(A)`.
pub fn row_projector(a: &Matrix) -> Result<Matrix> {
    ensure_finite(a, "row_projector input")?;
    let p = a.ncols();
    if a.nrows() == 0 {
        return Ok(Matrix::identity(p, p));
    }
    let gram = a * a.transpose();
    let eig = sym_eig(&symmetrize(&gram))?;
    let lo = eig.min().unwrap_or(0.0);
    let hi = eig.max().unwrap_or(0.0);
    if lo <= 0.0 || hi / lo > PROJECTOR_CONDITION_LIMIT {
        return Err(Error::RankDeficient {
            context: "row_projector: A A^T is singular",
        });
    }
    let mut gram_inv = Matrix::zeros(gram.nrows(), gram.nrows());
    for j in 0..eig.len() {
        let v = eig.eigenvectors.column(j);
        gram_inv += (v * v.transpose()) / eig.eigenvalues[j];
    }
    let proj = Matrix::identity(p, p) - a.transpose() * gram_inv * a;
    Ok(symmetrize(&proj))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &Matrix) -> Result<f64> {
    Ok(sym_eig(m)?.max().unwrap_or(0.0))
}

/// Frobenius-norm of `V^T V - I`.
pub fn orthonormality_defect(v: &Matrix) -> f64 {
    let k = v.ncols();
    (v.transpose() * v - Matrix::identity(k, k)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let g = random_matrix(rng, n, n);
        symmetrize(&(&g + g.transpose()))
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 1.0, 1.0]);

        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, -1.0]));
        let e = sym_eig(&d).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[-1.0, 2.0]);
        // canonical signs: largest component positive
        assert_eq!(e.eigenvectors.column(0).as_slice(), &[0.0, 1.0]);
        assert_eq!(e.eigenvectors.column(1).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn eig_reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 8, 17, 30] {
            let m = random_symmetric(&mut rng, n);
            let e = sym_eig(&m).unwrap();
            let err = (e.reconstruct() - &m).norm();
            assert!(err <= 1e-10 * m.norm().max(1.0), "n={n} err={err}");
            assert!(orthonormality_defect(&e.eigenvectors) <= 1e-10);
            for w in e.eigenvalues.as_slice().windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn eig_rejects_bad_input() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::NonSymmetric { .. })));
        let m = Matrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn basis_examples() {
        let b = orthonormal_basis(&[Vector::from_vec(vec![1.0, 0.0, 0.0])], RANK_TOL).unwrap();
        assert_eq!(b.ncols(), 1);
        assert!((b.column(0) - Vector::from_vec(vec![1.0, 0.0, 0.0])).norm() < 1e-15);

        let b = orthonormal_basis(
            &[
                Vector::from_vec(vec![1.0, 0.0]),
                Vector::from_vec(vec![2.0, 0.0]),
            ],
            RANK_TOL,
        )
        .unwrap();
        assert_eq!(b.ncols(), 1);
        assert!((b[(0, 0)].abs() - 1.0).abs() < 1e-15 && b[(1, 0)].abs() < 1e-15);

        let b = orthonormal_basis(
            &[
                Vector::from_vec(vec![1.0, 0.0, 1.0]),
                Vector::from_vec(vec![0.0, 1.0, 1.0]),
            ],
            RANK_TOL,
        )
        .unwrap();
        assert_eq!(b.ncols(), 2);
        assert!(orthonormality_defect(&b) <= 1e-12);
        // spans the inputs: projection residual is zero
        let proj = &b * b.transpose();
        let x = Vector::from_vec(vec![1.0, 0.0, 1.0]);
        assert!((&proj * &x - &x).norm() < 1e-12);
    }

    #[test]
    fn basis_rejects_empty_and_nonfinite() {
        assert!(matches!(
            orthonormal_basis(&[], RANK_TOL),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            orthonormal_basis(&[Vector::from_vec(vec![f64::INFINITY])], RANK_TOL),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn nullspace_examples() {
        assert_eq!(nullspace_basis(&Matrix::identity(2, 2), RANK_TOL).unwrap().ncols(), 0);

        let n = nullspace_basis(&Matrix::from_row_slice(1, 2, &[1.0, 0.0]), RANK_TOL).unwrap();
        assert_eq!(n.ncols(), 1);
        assert!((n.column(0) - Vector::from_vec(vec![0.0, 1.0])).norm() < 1e-15);

        let m = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let n = nullspace_basis(&m, RANK_TOL).unwrap();
        assert_eq!(n.ncols(), 2);
        for col in n.column_iter() {
            assert!(col.sum().abs() <= 1e-12);
        }
        assert!(orthonormality_defect(&n) <= 1e-12);
    }

    #[test]
    fn nullspace_complements_row_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (r, c) in [(2, 5), (4, 4), (3, 9), (6, 3)] {
            let m = random_matrix(&mut rng, r, c);
            let n = nullspace_basis(&m, RANK_TOL).unwrap();
            let rows = column_space_basis(&m.transpose(), RANK_TOL).unwrap();
            assert_eq!(n.ncols() + rows.ncols(), c);
            assert!((&m * &n).norm() <= 1e-10 * m.norm());
            let full = Matrix::from_columns(
                &rows
                    .column_iter()
                    .chain(n.column_iter())
                    .map(|c| c.into_owned())
                    .collect::<Vec<_>>(),
            );
            assert!(orthonormality_defect(&full) <= 1e-10);
        }
    }

    #[test]
    fn pseudoinverse_examples() {
        let i = Matrix::identity(3, 3);
        assert!((pseudoinverse(&i, RANK_TOL).unwrap() - &i).norm() < 1e-15);

        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let p = pseudoinverse(&d, RANK_TOL).unwrap();
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        assert!((p - expected).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_matrix(&mut rng, 4, 2);
        let m = &g * g.transpose();
        let p = pseudoinverse(&m, RANK_TOL).unwrap();
        assert!((&m * &p * &m - &m).norm() <= 1e-9 * m.norm());
        assert!((&p * &m * &p - &p).norm() <= 1e-9 * p.norm());
    }

    #[test]
    fn projector_examples() {
        let p = row_projector(&Matrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![0.0, 1.0]));
        assert!((p - expected).norm() < 1e-15);

        let p = row_projector(&Matrix::identity(2, 2)).unwrap();
        assert!(p.norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 3, 7);
        let p = row_projector(&a).unwrap();
        assert!((&p * &p - &p).norm() <= 1e-10);
        assert!((&p * a.transpose()).norm() <= 1e-10);
        assert!(asymmetry(&p) == 0.0);
    }

    #[test]
    fn projector_rejects_dependent_rows() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(row_projector(&a), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn projector_fixes_null_space_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_matrix(&mut rng, 2, 6);
        let p = row_projector(&a).unwrap();
        let n = nullspace_basis(&a, RANK_TOL).unwrap();
        for _ in 0..20 {
            let coeffs = Vector::from_fn(n.ncols(), |_, _| rng.sample(StandardNormal));
            let v = &n * coeffs;
            assert!((&p * &v - &v).norm() <= 1e-12 * v.norm());
        }
        // and moves anything with a row-space component
        let v = a.row(0).transpose();
        assert!((&p * &v - &v).norm() > 0.5 * v.norm());
    }
}
