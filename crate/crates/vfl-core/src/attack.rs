//! Reconstruction of passive features from model parameters and
//! (exact or estimated) confidence scores.
//!
//! Multiplying the logit identity by the score-difference operator `J`
//! removes the softmax normalization: `J W_pas x = c' - J W_act y - J b`
//! where `c'` is the log-ratio vector of the score. With `A = J W_pas`
//! and the right-hand side `b'`, reconstruction is the linear problem
//! `A x = b'`, solved by least squares when overdetermined (`d < k`) and
//! by the half* projection of the box center onto the solution space
//! when underdetermined (`d >= k`).

use crate::linalg::{self, LinalgError};
use crate::model::PartitionedModel;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("difference operator needs k >= 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("least squares requires d < k, got d={d}, k={k}")]
    NotOverdetermined { d: usize, k: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("empty score-gap list")]
    EmptyGapList,
}

/// The (k-1) x k operator with rows `(..., -1, 1, ...)`: each row is the
/// previous one shifted right by one column, and `J 1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceOperator {
    j: DMatrix<f64>,
}

impl DifferenceOperator {
    pub fn k(&self) -> usize {
        self.j.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.j
    }
}

/// Build the difference operator for `k` classes.
pub fn build_j(k: usize) -> Result<DifferenceOperator, AttackError> {
    if k < 2 {
        return Err(AttackError::TooFewClasses(k));
    }
    let j = DMatrix::from_fn(k - 1, k, |r, c| {
        if c == r {
            -1.0
        } else if c == r + 1 {
            1.0
        } else {
            0.0
        }
    });
    Ok(DifferenceOperator { j })
}

/// One target's linear reconstruction problem `A x = b'`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSystem {
    /// (k-1) x d coefficient matrix `J W_pas` (or `J W_n` when the
    /// disclosed parameters are distorted).
    pub a: DMatrix<f64>,
    /// Length k-1 right-hand side `c' - J W_act y - J b`.
    pub b_prime: DVector<f64>,
}

impl AttackSystem {
    pub fn d(&self) -> usize {
        self.a.ncols()
    }
}

/// Form the system from the disclosed passive block `disclosed_w`, the
/// active parameters, the active features of the target and a log-ratio
/// vector (exact or estimated).
pub fn form_system_with_disclosed(
    pm: &PartitionedModel,
    disclosed_w: &DMatrix<f64>,
    y: &DVector<f64>,
    c_prime: &DVector<f64>,
) -> AttackSystem {
    let j = build_j(pm.k()).expect("partitioned model has k >= 2").j;
    let a = &j * disclosed_w;
    let b_prime = c_prime - &j * (&pm.w_act * y) - &j * &pm.b;
    AttackSystem { a, b_prime }
}

/// [`form_system_with_disclosed`] with the true passive parameters.
pub fn form_system(
    pm: &PartitionedModel,
    y: &DVector<f64>,
    c_prime: &DVector<f64>,
) -> AttackSystem {
    form_system_with_disclosed(pm, &pm.w_pas, y, c_prime)
}

/// Least-squares estimate for the overdetermined case `d < k`, computed
/// by thin QR. Errors carry the numerical rank when `A` is deficient.
pub fn ls_estimate(sys: &AttackSystem) -> Result<DVector<f64>, AttackError> {
    let d = sys.d();
    let k = sys.a.nrows() + 1;
    if d >= k {
        return Err(AttackError::NotOverdetermined { d, k });
    }
    Ok(linalg::lstsq_qr(&sys.a, &sys.b_prime)?)
}

/// The solution closest to the box center: `A⁺ b' + (I - A⁺A) (1/2) 1`.
///
/// For `A = 0` the pseudoinverse vanishes and the estimate falls back to
/// the Chebyshev center of the unit box.
pub fn halfstar_estimate(sys: &AttackSystem) -> DVector<f64> {
    let d = sys.d();
    let a_pinv = linalg::pinv(&sys.a);
    let proj = &a_pinv * &sys.a;
    let half = DVector::from_element(d, 0.5);
    &a_pinv * &sys.b_prime + (DMatrix::identity(d, d) - proj) * half
}

/// Componentwise clamp into the unit box.
pub fn clip_to_box(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// Mean squared error per feature over (truth, estimate) pairs.
pub fn empirical_mse(pairs: &[(DVector<f64>, DVector<f64>)]) -> f64 {
    assert!(!pairs.is_empty(), "no samples");
    let d = pairs[0].0.len();
    let total: f64 = pairs
        .iter()
        .map(|(x, xh)| (x - xh).norm_squared())
        .sum();
    total / (pairs.len() * d) as f64
}

/// Empirical second moment of the score-estimation gaps
/// `E[(c_hat' - c')(c_hat' - c')^T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGapStats {
    pub k_cc: DMatrix<f64>,
}

pub fn gap_stats(pairs: &[(DVector<f64>, DVector<f64>)]) -> Result<ScoreGapStats, AttackError> {
    if pairs.is_empty() {
        return Err(AttackError::EmptyGapList);
    }
    let m = pairs[0].0.len();
    let mut k_cc = DMatrix::<f64>::zeros(m, m);
    for (c, c_hat) in pairs {
        let g = c_hat - c;
        k_cc += &g * g.transpose();
    }
    k_cc /= pairs.len() as f64;
    Ok(ScoreGapStats { k_cc })
}

/// Expected least-squares reconstruction error under score gaps:
/// `(1/d) Tr(A (A^T A)^{-2} A^T K_cc)`.
pub fn analytic_mse_ls(a: &DMatrix<f64>, k_cc: &DMatrix<f64>) -> f64 {
    let d = a.ncols();
    let ata_inv = (a.transpose() * a)
        .try_inverse()
        .expect("A has full column rank");
    let m = a * &ata_inv * &ata_inv * a.transpose();
    (&m * k_cc).trace() / d as f64
}

/// Expected half* reconstruction error: the exact-score floor
/// `(1/d) Tr((I - A⁺A) K_half1)` plus the score-gap penalty
/// `(1/d) Tr(A⁺ᵀ A⁺ K_cc)`.
pub fn analytic_mse_halfstar(
    a: &DMatrix<f64>,
    k_half1: &DMatrix<f64>,
    k_cc: &DMatrix<f64>,
) -> f64 {
    let d = a.ncols();
    let a_pinv = linalg::pinv(a);
    let proj = &a_pinv * a;
    let floor = ((DMatrix::identity(d, d) - proj) * k_half1).trace() / d as f64;
    let penalty = (a_pinv.transpose() * &a_pinv * k_cc).trace() / d as f64;
    floor + penalty
}
