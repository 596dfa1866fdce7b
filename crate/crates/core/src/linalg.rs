//! Small dense helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn cholesky(a: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numerical("matrix is not symmetric positive definite".into()))
}

/// Solves `A x = b` for SPD `A` by Cholesky factorization.
pub fn spd_solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    Ok(cholesky(a)?.solve(b))
}

/// Explicit inverse of an SPD matrix, through its Cholesky factor.
pub fn spd_inverse(a: &Matrix) -> Result<Matrix> {
    Ok(cholesky(a)?.inverse())
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

pub fn min_eigenvalue(a: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(a: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(a: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Raises every eigenvalue of the symmetric part of `a` to at least `floor`.
pub fn clamp_eigenvalues_below(a: &Matrix, floor: f64) -> Matrix {
    let eig = SymmetricEigen::new(symmetrize(a));
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let out = q * Matrix::from_diagonal(&clamped) * q.transpose();
    symmetrize(&out)
}

pub fn all_finite_vec(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn all_finite_mat(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Row-major nested arrays, as written to problem files.
pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::config(format!(
            "expected a {nrows}x{ncols} matrix, found {} rows",
            rows.len()
        )));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
