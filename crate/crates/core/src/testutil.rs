use nalgebra::DVector;
use rand::Rng;

use crate::statespace::{fd_jacobians, relative_deviation, DynamicalModel};

pub fn random_state<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..=scale))
}

pub fn assert_jacobians_match_fd(
    model: &dyn DynamicalModel,
    x: &DVector<f64>,
    z: &DVector<f64>,
    tol: f64,
) {
    let an = model.jacobians(x, z);
    let fd = fd_jacobians(model, x, z, 1e-6).unwrap();
    for (name, got, want) in [
        ("A", &an.a, &fd.a),
        ("B", &an.b, &fd.b),
        ("C", &an.c, &fd.c),
        ("F", &an.f, &fd.f),
    ] {
        assert_eq!(got.shape(), want.shape(), "{name} shape");
        let dev = relative_deviation(got, want);
        assert!(dev < tol, "{} {name}: deviation {dev:e}", model.name());
    }
}
