use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{DynamicalModel, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;

/// Which Jacobian blocks enter the Lipschitz estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Wrt {
    /// `[∂f/∂x  ∂f/∂θ]`
    #[default]
    Joint,
    /// `∂f/∂x` only (θ frozen).
    State,
}

/// Axis-aligned box over states and, optionally, parameters. When `params`
/// is `None` the model's current θ is held fixed.
#[derive(Debug, Clone, Serialize)]
pub struct Region {
    pub state_lo: DVector<f64>,
    pub state_hi: DVector<f64>,
    pub params: Option<(DVector<f64>, DVector<f64>)>,
    pub wrt: Wrt,
}

impl Region {
    pub fn state_box(lo: DVector<f64>, hi: DVector<f64>) -> Self {
        Self {
            state_lo: lo,
            state_hi: hi,
            params: None,
            wrt: Wrt::Joint,
        }
    }

    /// `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self::state_box(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    /// Same box, differentiating with respect to the state only.
    pub fn state_only(mut self) -> Self {
        self.wrt = Wrt::State;
        self
    }

    /// Bounding box of the states visited by a trajectory, from row `from` on.
    pub fn around(tr: &Trajectory, from: usize) -> Self {
        let n = tr.states.ncols();
        let mut lo = DVector::from_element(n, f64::INFINITY);
        let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
        for t in from..tr.len() {
            for i in 0..n {
                lo[i] = lo[i].min(tr.states[(t, i)]);
                hi[i] = hi[i].max(tr.states[(t, i)]);
            }
        }
        Self::state_box(lo, hi)
    }

    fn validate(&self) -> Result<()> {
        let ok = |lo: &DVector<f64>, hi: &DVector<f64>| {
            lo.len() == hi.len() && lo.iter().zip(hi.iter()).all(|(a, b)| a <= b)
        };
        if !ok(&self.state_lo, &self.state_hi) {
            return Err(Error::EmptyRegion);
        }
        if let Some((lo, hi)) = &self.params {
            if !ok(lo, hi) {
                return Err(Error::EmptyRegion);
            }
        }
        Ok(())
    }
}

fn sample_box(rng: &mut ChaCha8Rng, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(lo.len(), |i, _| {
        if hi[i] > lo[i] {
            rng.random_range(lo[i]..=hi[i])
        } else {
            lo[i]
        }
    })
}

/// Spectral norm of `[∂f/∂x  ∂f/∂θ]` at one point.
pub fn joint_jacobian_norm(model: &dyn DynamicalModel, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let j = model.jacobians(x, u);
    let n = model.state_dim();
    let mut joint = DMatrix::zeros(n, n + j.b.ncols());
    joint.columns_mut(0, n).copy_from(&j.a);
    joint.columns_mut(n, j.b.ncols()).copy_from(&j.b);
    spectral_norm(&joint)
}

/// Empirical Lipschitz constant of `f`, by default jointly in `(x, θ)`: the
/// largest spectral norm of the Jacobian over the box centre plus `n_samples − 1` uniform
/// draws. A lower bound on the true constant over the region.
pub fn estimate_lipschitz_f(
    model: &dyn DynamicalModel,
    region: &Region,
    u: &DVector<f64>,
    n_samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    if n_samples < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: n_samples,
        });
    }
    region.validate()?;
    if region.state_lo.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "region",
            expected: model.state_dim(),
            got: region.state_lo.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut points = Vec::with_capacity(n_samples);
    let centre = |lo: &DVector<f64>, hi: &DVector<f64>| (lo + hi) * 0.5;
    points.push((
        centre(&region.state_lo, &region.state_hi),
        region.params.as_ref().map(|(lo, hi)| centre(lo, hi)),
    ));
    for _ in 1..n_samples {
        let x = sample_box(&mut rng, &region.state_lo, &region.state_hi);
        let th = region
            .params
            .as_ref()
            .map(|(lo, hi)| sample_box(&mut rng, lo, hi));
        points.push((x, th));
    }
    let wrt = region.wrt;
    let norm_at = move |m: &dyn DynamicalModel, x: &DVector<f64>| match wrt {
        Wrt::Joint => joint_jacobian_norm(m, x, u),
        Wrt::State => spectral_norm(&m.state_jacobian(x, u)),
    };
    let norms: Vec<Result<f64>> = points
        .par_iter()
        .map(|(x, th)| match th {
            None => Ok(norm_at(model, x)),
            Some(th) => {
                let m = super::with_params(model, th.as_slice())?;
                Ok(norm_at(m.as_ref(), x))
            }
        })
        .collect();
    let mut best = 0.0f64;
    for n in norms {
        best = best.max(n?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::toy::{LinearSystem, TanhMap};
    use nalgebra::dvector;

    #[test]
    fn linear_map_constant() {
        let m = LinearSystem::scalar(-0.7);
        let l = estimate_lipschitz_f(&m, &Region::cube(1, -5.0, 5.0), &DVector::zeros(0), 50, 1)
            .unwrap();
        assert!((l - 0.7).abs() < 1e-15);
    }

    #[test]
    fn tanh_map_peaks_at_origin() {
        // dense-grid oracle of sech²(2x)·sqrt(4 + x²) over [-2, 2]
        let grid_max = (0..=400_000)
            .map(|i| -2.0 + 4.0 * i as f64 / 400_000.0)
            .map(|x: f64| {
                let s = 1.0 - (2.0 * x).tanh().powi(2);
                s * (4.0 + x * x).sqrt()
            })
            .fold(0.0, f64::max);
        assert!((grid_max - 2.0).abs() < 1e-12);
        let m = TanhMap::scalar(2.0);
        let l = estimate_lipschitz_f(&m, &Region::cube(1, -2.0, 2.0), &DVector::zeros(0), 200, 3)
            .unwrap();
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let m = TanhMap::new(DMatrix::from_row_slice(2, 2, &[0.5, -1.2, 0.8, 0.3]));
        let r = Region::cube(2, -1.0, 1.0);
        let a = estimate_lipschitz_f(&m, &r, &DVector::zeros(0), 64, 9).unwrap();
        let b = estimate_lipschitz_f(&m, &r, &DVector::zeros(0), 64, 9).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn empty_region_rejected() {
        let m = LinearSystem::scalar(0.5);
        let r = Region::state_box(dvector![1.0], dvector![-1.0]);
        assert!(matches!(
            estimate_lipschitz_f(&m, &r, &DVector::zeros(0), 10, 0),
            Err(Error::EmptyRegion)
        ));
        assert!(estimate_lipschitz_f(&m, &Region::cube(1, 0.0, 1.0), &DVector::zeros(0), 1, 0).is_err());
    }

    #[test]
    fn parameter_box_is_sampled() {
        let m = TanhMap::scalar(0.1);
        let mut r = Region::cube(1, 0.0, 0.0);
        r.params = Some((dvector![0.5], dvector![0.5]));
        // at x = 0 the joint norm is |w|
        let l = estimate_lipschitz_f(&m, &r, &DVector::zeros(0), 4, 0).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
    }
}
