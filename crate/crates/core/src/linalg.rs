//! Dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Largest singular value, via a full SVD.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest singular value by power iteration on `MᵀM`.
///
/// Converges from below; `iters` and `tol` bound the work.
pub fn spectral_norm_power(m: &DMatrix<f64>, iters: usize, tol: f64) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let n = m.ncols();
    // deterministic start with no zero entries
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64) * 1e-3);
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..iters {
        let mv = m * &v;
        let w = m.transpose() * &mv;
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let next = (m * &v).norm();
        if (next - sigma).abs() <= tol * next.max(1.0) {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// `log|det A|` via LU; `-inf` for singular matrices.
pub fn log_abs_det(a: &DMatrix<f64>) -> f64 {
    let lu = a.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].abs().ln()).sum()
}

/// `max_ij |M_ij|`.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `‖AᵀA − I‖_max`.
pub fn orthogonality_defect(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    max_abs(&(a.transpose() * a - DMatrix::<f64>::identity(n, n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_agrees_with_svd() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -1.0, 3.0, 0.5, 0.0, 0.2, -1.0]);
        let exact = spectral_norm(&m);
        let approx = spectral_norm_power(&m, 500, 1e-14);
        assert!((exact - approx).abs() < 1e-9 * exact);
    }

    #[test]
    fn radius_of_rotation_is_one() {
        let (s, c) = 0.3f64.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!((spectral_radius(&r) - 1.0).abs() < 1e-12);
        assert!(orthogonality_defect(&r) < 1e-15);
    }

    #[test]
    fn log_det_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -4.0]));
        assert!((log_abs_det(&a) - 2f64.ln()).abs() < 1e-15);
    }
}
