//! Dense small-matrix helpers shared by the solver, bounds and calibration code.
//!
//! Everything here works on `nalgebra` dynamic matrices. Decompositions
//! (symmetric eigen, SVD, Cholesky, LU) come from `nalgebra`; this module adds
//! the tolerance conventions the rest of the crate relies on.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest tolerated `|a_ij - a_ji|` for a matrix to count as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Singular values below `RANK_TOL * s_1` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Eigenvalues of `W` below `-FACTOR_TOL` make the symmetric factorization fail.
pub const FACTOR_TOL: f64 = 1e-9;

pub fn max_asymmetry(m: &Matrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn ensure_symmetric(m: &Matrix) -> Result<()> {
    let asymmetry = max_asymmetry(m);
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NonSymmetric { asymmetry });
    }
    Ok(())
}

pub fn ensure_finite(name: &str, m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { name: name.to_owned() })
    }
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    ensure_symmetric(s)?;
    let mut values: Vec<f64> = symmetrize(s).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn extreme_eigenvalues(s: &Matrix) -> Result<(f64, f64)> {
    let values = symmetric_eigenvalues(s)?;
    match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::dims("empty matrix has no eigenvalues")),
    }
}

/// Singular values sorted in descending order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut values: Vec<f64> = a.singular_values().iter().map(|s| s.abs()).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values
}

/// Number of singular values above `rank_tol * s_1`.
pub fn numerical_rank(a: &Matrix, rank_tol: f64) -> usize {
    let values = singular_values(a);
    match values.first() {
        Some(&s1) if s1 > 0.0 => values.iter().filter(|&&s| s > rank_tol * s1).count(),
        _ => 0,
    }
}

/// True when `[C; CH; ...; CH^{n-1}]` has full column rank.
///
/// # Panics
///
/// If `H` is not square or `C` does not have `n` columns.
pub fn observability_check(h: &Matrix, c: &Matrix) -> bool {
    observability_check_with_tol(h, c, RANK_TOL)
}

pub fn observability_check_with_tol(h: &Matrix, c: &Matrix, rank_tol: f64) -> bool {
    assert!(h.is_square(), "H must be square");
    assert_eq!(c.ncols(), h.nrows(), "C must have n columns");
    let n = h.nrows();
    let q = c.nrows();
    let mut stacked = Matrix::zeros(q * n, n);
    let mut block = c.clone();
    for i in 0..n {
        stacked.view_mut((i * q, 0), (q, n)).copy_from(&block);
        block = &block * h;
    }
    numerical_rank(&stacked, rank_tol) == n
}

/// A factor `D` with `W = D D^T`, built from the eigendecomposition of `W`.
///
/// Tiny negative eigenvalues (round-off) are clamped to zero.
pub fn symmetric_factor(w: &Matrix) -> Result<Matrix> {
    ensure_symmetric(w)?;
    let eig = symmetrize(w).symmetric_eigen();
    let mut d = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -FACTOR_TOL {
            return Err(Error::FactorizationFailure { eigenvalue: lambda });
        }
        let scale = lambda.max(0.0).sqrt();
        d.column_mut(j).scale_mut(scale);
    }
    Ok(d)
}

/// True when `[D, HD, ..., H^{n-1} D]` has full row rank, with `W = D D^T`.
pub fn controllability_check(h: &Matrix, w: &Matrix) -> Result<bool> {
    if !h.is_square() || w.shape() != h.shape() {
        return Err(Error::dims("H and W must both be n x n"));
    }
    let d = symmetric_factor(w)?;
    let n = h.nrows();
    let mut stacked = Matrix::zeros(n, n * n);
    let mut block = d;
    for i in 0..n {
        stacked.view_mut((0, i * n), (n, n)).copy_from(&block);
        block = h * &block;
    }
    Ok(numerical_rank(&stacked, RANK_TOL) == n)
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse(m: &Matrix) -> Option<Matrix> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))?;
    Some(symmetrize(&chol.inverse()))
}

/// `ln det M` for symmetric positive definite `M`.
pub fn log_det_spd(m: &Matrix) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Determinant through LU with partial pivoting (sign preserved).
pub fn determinant(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    m.clone().lu().determinant()
}

pub fn relative_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let scale = b.norm();
    let diff = (a - b).norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Checks that a square matrix is diagonal: off-diagonal magnitudes stay below
/// `1e-12 * max |m_ii|`.
pub fn is_diagonal(m: &Matrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-12 * scale;
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && !(m[(i, j)].abs() < tol || m[(i, j)] == 0.0) {
                return false;
            }
        }
    }
    true
}

/// Block-diagonal assembly of the given (not necessarily square) blocks.
pub fn block_diagonal<'a>(blocks: impl IntoIterator<Item = &'a Matrix>) -> Matrix {
    let blocks: Vec<&Matrix> = blocks.into_iter().collect();
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
