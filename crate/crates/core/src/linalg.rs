//! Small dense helpers shared by the solver, the certificate checks and the
//! simulator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `(a + aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(a)).eigenvalues.min()
}

/// Largest eigenvalue of the symmetric part of `a`.
pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(symmetrize(a)).eigenvalues.max()
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// 2-norm condition number of a symmetric positive definite matrix.
/// Returns `f64::INFINITY` when the matrix is not positive definite.
pub fn spd_condition(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(a)).eigenvalues;
    let lo = eig.min();
    if lo <= 0.0 {
        return f64::INFINITY;
    }
    eig.max() / lo
}

/// `⟨a, b⟩ = tr(aᵀ b)`.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Projection onto the span of `v`: `v vᵀ / ‖v‖²`.
pub fn projection(v: &DVector<f64>) -> DMatrix<f64> {
    let nrm2 = v.norm_squared();
    (v * v.transpose()) / nrm2
}
