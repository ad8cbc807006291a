//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Operator 2-norm (largest singular value), computed as the square root of
/// the largest eigenvalue of `MᵀM`. The symmetric eigensolve is robust and
/// the square root keeps the absolute error near machine precision in the
/// norm itself.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let eigs = gram.symmetric_eigenvalues();
    eigs.iter().fold(0.0_f64, |acc, &v| acc.max(v)).max(0.0).sqrt()
}

/// Eigenvalue range of a symmetric matrix, returned as `(min, max)`.
pub fn symmetric_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eigs = m.symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eigs.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Euclidean norm of a vector.
pub fn vec_norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_norm_of_rotation_like_family() {
        // [[a, 1], [-1, a]] has AᵀA = (a²+1) I, so the norm is √(a²+1)
        for a in [-2.1, -1.0, 0.0, 0.1, 3.0] {
            let m = DMatrix::from_row_slice(2, 2, &[a, 1.0, -1.0, a]);
            assert!((op_norm(&m) - (a * a + 1.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn op_norm_of_diag() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -7.0]);
        assert!((op_norm(&m) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_range() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (lo, hi) = symmetric_eig_range(&m);
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 3.0).abs() < 1e-12);
    }
}
