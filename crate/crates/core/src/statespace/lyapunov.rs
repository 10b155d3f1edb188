use nalgebra::{DMatrix, DVector};

use super::DynamicalModel;
use crate::error::{Error, Result};

/// Leading `k` Lyapunov exponents under constant input `ū`.
///
/// The direction matrix is propagated by the state Jacobians and
/// re-orthonormalized by a QR factorization at every step; the exponents are
/// the time averages of `log|R_ii|`.
pub fn lyapunov_spectrum(
    model: &dyn DynamicalModel,
    x0: &DVector<f64>,
    u: &DVector<f64>,
    burn_in: usize,
    horizon: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: n,
            got: x0.len(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::invalid("number of exponents must be in 1..=N_x"));
    }
    let mut x = x0.clone();
    for t in 0..burn_in {
        x = model.step(&x, u);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { step: t + 1 });
        }
    }
    let mut q = DMatrix::<f64>::identity(n, k);
    let mut sums = vec![0.0; k];
    for t in 0..horizon {
        let a = model.state_jacobian(&x, u);
        let qr = (a * &q).qr();
        let r = qr.r();
        for (i, s) in sums.iter_mut().enumerate() {
            *s += r[(i, i)].abs().ln();
        }
        q = qr.q();
        x = model.step(&x, u);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState {
                step: burn_in + t + 1,
            });
        }
    }
    Ok(sums.into_iter().map(|s| s / horizon as f64).collect())
}

/// Largest Lyapunov exponent; positive values indicate chaos.
pub fn lyapunov_exponent(
    model: &dyn DynamicalModel,
    x0: &DVector<f64>,
    u: &DVector<f64>,
    burn_in: usize,
    horizon: usize,
) -> Result<f64> {
    if horizon < 100 {
        return Err(Error::invalid("Lyapunov horizon must be at least 100 steps"));
    }
    let k = model.state_dim();
    let spec = lyapunov_spectrum(model, x0, u, burn_in, horizon, k)?;
    Ok(spec.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::toy::{LinearSystem, LogisticMap};
    use nalgebra::dvector;

    #[test]
    fn halving_map() {
        let m = LinearSystem::scalar(0.5);
        let l = lyapunov_exponent(&m, &dvector![1.0], &DVector::zeros(0), 0, 200).unwrap();
        assert!((l - 0.5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn rotation_is_neutral() {
        let m = LinearSystem::rotation(0.7);
        let l = lyapunov_exponent(&m, &dvector![1.0, 0.0], &DVector::zeros(0), 10, 500).unwrap();
        assert!(l.abs() < 1e-6);
    }

    #[test]
    fn full_logistic_map_is_ln2() {
        // r = 4 has exponent ln 2 for almost every start
        let m = LogisticMap::new(4.0);
        let l = lyapunov_exponent(&m, &dvector![0.123], &DVector::zeros(0), 100, 100_000).unwrap();
        assert!((l - 2f64.ln()).abs() < 2e-2, "{l}");
    }

    #[test]
    fn short_horizon_rejected() {
        let m = LinearSystem::scalar(0.5);
        assert!(lyapunov_exponent(&m, &dvector![1.0], &DVector::zeros(0), 0, 99).is_err());
    }

    #[test]
    fn spectrum_of_diagonal_map() {
        let m = LinearSystem::new(
            DMatrix::from_diagonal(&dvector![0.9, 0.3]),
            DMatrix::zeros(2, 0),
            DMatrix::identity(2, 2),
        );
        let s = lyapunov_spectrum(&m, &dvector![1.0, 1.0], &DVector::zeros(0), 0, 300, 2).unwrap();
        assert!((s[0] - 0.9f64.ln()).abs() < 1e-9);
        assert!((s[1] - 0.3f64.ln()).abs() < 1e-9);
    }
}
