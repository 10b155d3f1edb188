use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{log_abs_det, spectral_norm};

/// Differential entropy (nats) of `x_t` under `x_{t+1} = A x_t`, `x_0 ~ N(0, Σ₀)`.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyTrace {
    /// `H_t = H_0 + t·log|det A|`.
    pub h: Vec<f64>,
    /// `½ log((2πe)^{N_x} det Σ_t)` with `Σ_{t+1} = A Σ_t Aᵀ` propagated numerically.
    pub h_propagated: Vec<f64>,
    /// `log|det A|`.
    pub increment: f64,
    pub n_x: usize,
    #[serde(skip)]
    pub a: DMatrix<f64>,
}

fn gaussian_entropy(sigma: &DMatrix<f64>) -> Result<f64> {
    let n = sigma.nrows() as f64;
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(0.5 * (n * (2.0 * PI * E).ln() + log_det))
}

pub fn entropy_linear_gaussian(a: &DMatrix<f64>, sigma0: &DMatrix<f64>, steps: usize) -> Result<EntropyTrace> {
    let n = a.nrows();
    if !a.is_square() || sigma0.shape() != (n, n) {
        return Err(Error::invalid("A and Σ₀ must be square of the same size"));
    }
    if (sigma0 - sigma0.transpose()).abs().max() > 1e-12 * sigma0.abs().max().max(1.0) {
        return Err(Error::invalid("Σ₀ must be symmetric"));
    }
    let increment = log_abs_det(a);
    if !increment.is_finite() {
        return Err(Error::SingularMatrix);
    }
    let h0 = gaussian_entropy(sigma0)?;
    let h = (0..=steps).map(|t| h0 + t as f64 * increment).collect();
    let mut sigma = sigma0.clone();
    let mut h_propagated = vec![h0];
    for _ in 0..steps {
        sigma = a * &sigma * a.transpose();
        sigma = (&sigma + sigma.transpose()) * 0.5;
        h_propagated.push(gaussian_entropy(&sigma).unwrap_or(f64::NAN));
    }
    Ok(EntropyTrace {
        h,
        h_propagated,
        increment,
        n_x: n,
        a: a.clone(),
    })
}

/// Which orientation of the per-step entropy inequality holds at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Equality: both forms hold.
    Both,
    /// Only `H_{t+1} ≤ H_t + N_x log L_f`.
    UpperOnly,
    /// Only `H_t + N_x log L_f ≤ H_{t+1}`.
    LowerOnly,
    Neither,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyBoundReport {
    /// `N_x log L_f`.
    pub rate: f64,
    pub increment: f64,
    /// `H_{t+1} ≤ H_t + N_x log L_f` per step.
    pub direction_satisfied_upper: Vec<bool>,
    /// `H_t + N_x log L_f ≤ H_{t+1}` per step.
    pub direction_satisfied_lower: Vec<bool>,
    pub orientation: Orientation,
}

/// Evaluate both orientations of the entropy-rate inequality at every step,
/// with a rounding allowance of `1e−12·max(1, |H|)`.
pub fn check_entropy_bound(trace: &EntropyTrace, l_f: f64) -> Result<EntropyBoundReport> {
    if !(l_f > 0.0) {
        return Err(Error::invalid("L_f must be positive"));
    }
    let rate = trace.n_x as f64 * l_f.ln();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for w in trace.h.windows(2) {
        let eps = 1e-12 * w[0].abs().max(w[1].abs()).max(1.0);
        upper.push(w[1] <= w[0] + rate + eps);
        lower.push(w[0] + rate <= w[1] + eps);
    }
    let orientation = match (upper.iter().all(|b| *b), lower.iter().all(|b| *b)) {
        (true, true) => Orientation::Both,
        (true, false) => Orientation::UpperOnly,
        (false, true) => Orientation::LowerOnly,
        (false, false) => Orientation::Neither,
    };
    Ok(EntropyBoundReport {
        rate,
        increment: trace.increment,
        direction_satisfied_upper: upper,
        direction_satisfied_lower: lower,
        orientation,
    })
}

/// `log|det A| ≤ Σ_i log‖a_i‖₂ ≤ N_x log σ_max(A)`.
#[derive(Debug, Clone, Serialize)]
pub struct HadamardChain {
    pub log_abs_det: f64,
    pub sum_log_column_norms: f64,
    pub n_log_sigma_max: f64,
    pub holds: bool,
}

pub fn hadamard_chain(a: &DMatrix<f64>) -> HadamardChain {
    let n = a.ncols();
    let lad = log_abs_det(a);
    let cols: f64 = (0..n).map(|j| a.column(j).norm().ln()).sum();
    let top = n as f64 * spectral_norm(a).ln();
    let eps = 1e-10 * top.abs().max(1.0);
    HadamardChain {
        log_abs_det: lad,
        sum_log_column_norms: cols,
        n_log_sigma_max: top,
        holds: lad <= cols + eps && cols <= top + eps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::random_orthogonal;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_keeps_entropy() {
        let t = entropy_linear_gaussian(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3), 5).unwrap();
        assert!(t.h.iter().all(|h| *h == t.h[0]));
        assert_eq!(t.increment, 0.0);
    }

    #[test]
    fn halving_increment() {
        let a = DMatrix::identity(2, 2) * 0.5;
        let t = entropy_linear_gaussian(&a, &DMatrix::identity(2, 2), 10).unwrap();
        assert!((t.increment - 0.25f64.ln()).abs() < 1e-15);
        for w in t.h_propagated.windows(2) {
            assert!((w[1] - w[0] - 0.25f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_preserves_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_orthogonal(4, &mut rng);
        let t = entropy_linear_gaussian(&q, &DMatrix::identity(4, 4), 3).unwrap();
        assert!(t.increment.abs() < 1e-14);
    }

    #[test]
    fn scaled_identity_is_tight() {
        let a = DMatrix::identity(3, 3) * 1.3;
        let t = entropy_linear_gaussian(&a, &DMatrix::identity(3, 3), 4).unwrap();
        let r = check_entropy_bound(&t, 1.3).unwrap();
        assert_eq!(r.orientation, Orientation::Both);
    }

    #[test]
    fn diagonal_counter_case() {
        let a = DMatrix::from_diagonal(&dvector![0.9, 0.1]);
        let t = entropy_linear_gaussian(&a, &DMatrix::identity(2, 2), 5).unwrap();
        assert!((t.increment - 0.09f64.ln()).abs() < 1e-15);
        let r = check_entropy_bound(&t, 0.9).unwrap();
        assert_eq!(r.orientation, Orientation::UpperOnly);
        assert!(r.direction_satisfied_lower.iter().all(|b| !b));
    }

    #[test]
    fn singular_and_bad_covariance() {
        let a = DMatrix::from_diagonal(&dvector![1.0, 0.0]);
        assert!(matches!(
            entropy_linear_gaussian(&a, &DMatrix::identity(2, 2), 2),
            Err(Error::SingularMatrix)
        ));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(entropy_linear_gaussian(&DMatrix::identity(2, 2), &bad, 2).is_err());
    }

    #[test]
    fn hadamard_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.random_range(1..7);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
            assert!(hadamard_chain(&a).holds);
        }
    }
}
