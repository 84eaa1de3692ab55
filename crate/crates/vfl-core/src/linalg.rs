//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative singular-value cutoff used for pseudoinverses and rank checks.
pub const RCOND: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    /// The coefficient matrix does not have full column rank at the
    /// working cutoff; carries the numerical rank found.
    #[error("matrix is rank deficient: numerical rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },
}

/// Moore–Penrose pseudoinverse via SVD with cutoff `RCOND * sigma_max`.
///
/// The pseudoinverse of an all-zero matrix is the zero matrix transposed.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.pseudo_inverse(RCOND * smax)
        .expect("cutoff is nonnegative")
}

/// The orthogonal projector `A⁺A` onto the row space of `A`.
pub fn row_space_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    pinv(a) * a
}

/// Numerical rank at the relative cutoff `RCOND`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RCOND * smax).count()
}

/// Minimum-residual solution of an overdetermined `Ax = b` by thin QR.
///
/// Errors when `A` is numerically rank deficient, carrying the rank.
pub fn lstsq_qr(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let cols = a.ncols();
    let rank = numerical_rank(a);
    if rank < cols {
        return Err(LinalgError::RankDeficient { rank, cols });
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or(LinalgError::RankDeficient { rank, cols })
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Column-major vectorization of a matrix.
pub fn vec_cols(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_cols`].
pub fn unvec_cols(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}
