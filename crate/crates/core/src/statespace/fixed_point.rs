use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::DynamicalModel;
use crate::error::{Error, Result};
use crate::linalg::spectral_radius;

/// Spectral radii within this distance of 1 are reported as marginal.
pub const STABILITY_MARGIN: f64 = 1e-3;

const MAX_NEWTON_ITERS: usize = 100;
const MAX_DAMPED_ITERS: usize = 10_000;
const DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn classify(spectral_radius: f64) -> Self {
        if (spectral_radius - 1.0).abs() <= STABILITY_MARGIN {
            Stability::Marginal
        } else if spectral_radius < 1.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPoint {
    pub x_star: DVector<f64>,
    /// ‖f(x*, ū) − x*‖.
    pub residual: f64,
    pub jacobian_spectral_radius: f64,
    pub stability: Stability,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedFailure {
    pub seed_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FixedPointSearch {
    pub points: Vec<FixedPoint>,
    pub failures: Vec<SeedFailure>,
}

fn residual(model: &dyn DynamicalModel, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    model.step(x, u) - x
}

/// Newton iteration on `r(x) = f(x, ū) − x`; falls back to damped fixed-point
/// iteration whenever the Newton system is singular.
fn solve_from(
    model: &dyn DynamicalModel,
    u: &DVector<f64>,
    seed: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let n = model.state_dim();
    let mut x = seed.clone();
    for _ in 0..MAX_NEWTON_ITERS {
        let r = residual(model, &x, u);
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence);
        }
        if r.norm() < tol {
            return Ok(x);
        }
        let jac = model.state_jacobian(&x, u) - DMatrix::<f64>::identity(n, n);
        match jac.lu().solve(&r) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => x -= dx,
            _ => return damped_iteration(model, u, x, tol),
        }
    }
    if residual(model, &x, u).norm() < tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence)
    }
}

fn damped_iteration(
    model: &dyn DynamicalModel,
    u: &DVector<f64>,
    mut x: DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    for _ in 0..MAX_DAMPED_ITERS {
        let fx = model.step(&x, u);
        if (&fx - &x).norm() < tol {
            return Ok(x);
        }
        x = &x * (1.0 - DAMPING) + fx * DAMPING;
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::SingularJacobian)
}

/// Fixed points of `x ↦ f(x, ū)` reached from each seed, deduplicated at
/// distance `10·tol` and classified by the spectral radius of `∂f/∂x` at the root.
/// Seeds that fail are recorded, not fatal.
pub fn find_fixed_points(
    model: &dyn DynamicalModel,
    u: &DVector<f64>,
    seeds: &[DVector<f64>],
    tol: f64,
) -> Result<FixedPointSearch> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    if u.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: model.input_dim(),
            got: u.len(),
        });
    }
    let mut out = FixedPointSearch::default();
    for (i, seed) in seeds.iter().enumerate() {
        if seed.len() != model.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "seed",
                expected: model.state_dim(),
                got: seed.len(),
            });
        }
        match solve_from(model, u, seed, tol) {
            Ok(x) => {
                if out
                    .points
                    .iter()
                    .any(|p| (&p.x_star - &x).norm() < 10.0 * tol)
                {
                    continue;
                }
                let rho = spectral_radius(&model.state_jacobian(&x, u));
                out.points.push(FixedPoint {
                    residual: residual(model, &x, u).norm(),
                    jacobian_spectral_radius: rho,
                    stability: Stability::classify(rho),
                    x_star: x,
                });
            }
            Err(e) => out.failures.push(SeedFailure {
                seed_index: i,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::toy::{LinearSystem, TanhMap};
    use nalgebra::dvector;

    fn bisect_tanh3() -> f64 {
        // positive root of x = tanh(3x)
        let (mut lo, mut hi) = (0.5f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (3.0 * mid).tanh() - mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn halving_map_has_stable_origin() {
        let m = LinearSystem::scalar(0.5);
        let res = find_fixed_points(&m, &DVector::zeros(0), &[dvector![3.0]], 1e-12).unwrap();
        assert_eq!(res.points.len(), 1);
        let p = &res.points[0];
        assert!(p.x_star[0].abs() < 1e-12);
        assert!((p.jacobian_spectral_radius - 0.5).abs() < 1e-12);
        assert_eq!(p.stability, Stability::Stable);
    }

    #[test]
    fn tanh3_has_three_roots() {
        let m = TanhMap::scalar(3.0);
        let seeds = [dvector![-1.0], dvector![0.0], dvector![1.0]];
        let res = find_fixed_points(&m, &DVector::zeros(0), &seeds, 1e-12).unwrap();
        assert_eq!(res.points.len(), 3);
        let root = bisect_tanh3();
        assert!((root - 0.995).abs() < 1e-3);
        let mut xs: Vec<_> = res.points.iter().map(|p| (p.x_star[0], p.stability)).collect();
        xs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!((xs[0].0 + root).abs() < 1e-10);
        assert!(xs[1].0.abs() < 1e-12);
        assert!((xs[2].0 - root).abs() < 1e-10);
        assert_eq!(xs[0].1, Stability::Stable);
        assert_eq!(xs[1].1, Stability::Unstable);
        assert_eq!(xs[2].1, Stability::Stable);
    }

    #[test]
    fn nearby_seeds_are_deduplicated() {
        let m = TanhMap::scalar(3.0);
        let seeds = [dvector![0.9], dvector![0.95], dvector![1.1]];
        let res = find_fixed_points(&m, &DVector::zeros(0), &seeds, 1e-10).unwrap();
        assert_eq!(res.points.len(), 1);
    }

    #[test]
    fn translation_records_singular_failure() {
        // x' = x + u has an identically singular Newton system and no fixed point
        let m = LinearSystem::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
        );
        let res = find_fixed_points(&m, &dvector![1.0], &[dvector![0.0]], 1e-9).unwrap();
        assert!(res.points.is_empty());
        assert_eq!(res.failures.len(), 1);
        assert!(res.failures[0].reason.contains("singular"));
    }

    #[test]
    fn identity_slope_root_is_marginal() {
        let m = TanhMap::scalar(1.0);
        let res = find_fixed_points(&m, &DVector::zeros(0), &[dvector![0.0]], 1e-9).unwrap();
        assert_eq!(res.points.len(), 1);
        assert_eq!(res.points[0].stability, Stability::Marginal);
    }

    #[test]
    fn margin_classification() {
        assert_eq!(Stability::classify(0.998), Stability::Stable);
        assert_eq!(Stability::classify(0.9995), Stability::Marginal);
        assert_eq!(Stability::classify(1.0008), Stability::Marginal);
        assert_eq!(Stability::classify(1.01), Stability::Unstable);
    }

    #[test]
    fn bad_arguments() {
        let m = LinearSystem::scalar(0.5);
        assert!(find_fixed_points(&m, &DVector::zeros(0), &[], 1e-9).is_err());
        assert!(find_fixed_points(&m, &DVector::zeros(0), &[dvector![1.0]], 0.0).is_err());
    }
}
