use nalgebra::{DMatrix, DVector};

use super::{DynamicalModel, Jacobians};
use crate::error::Result;

/// Central finite-difference approximation of all four Jacobians.
pub fn fd_jacobians(
    model: &dyn DynamicalModel,
    x: &DVector<f64>,
    z: &DVector<f64>,
    step: f64,
) -> Result<Jacobians> {
    let nx = model.state_dim();
    let ny = model.output_dim();
    let np = model.n_params();
    let mut a = DMatrix::zeros(nx, nx);
    let mut c = DMatrix::zeros(ny, nx);
    for j in 0..nx {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        a.set_column(j, &((model.step(&xp, z) - model.step(&xm, z)) / (2.0 * step)));
        c.set_column(j, &((model.output(&xp, z) - model.output(&xm, z)) / (2.0 * step)));
    }
    let mut b = DMatrix::zeros(nx, np);
    let mut f = DMatrix::zeros(ny, np);
    let theta = model.params().values().to_vec();
    let mut m = model.clone_box();
    for j in 0..np {
        let mut th = theta.clone();
        th[j] = theta[j] + step;
        m.set_param_values(&th)?;
        let (sp, op) = (m.step(x, z), m.output(x, z));
        th[j] = theta[j] - step;
        m.set_param_values(&th)?;
        let (sm, om) = (m.step(x, z), m.output(x, z));
        b.set_column(j, &((sp - sm) / (2.0 * step)));
        f.set_column(j, &((op - om) / (2.0 * step)));
    }
    Ok(Jacobians { a, b, c, f })
}

/// Largest entrywise deviation between two matrices, relative to `max(1, max|reference|)`.
pub fn relative_deviation(got: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    got.iter()
        .zip(reference.iter())
        .fold(0.0f64, |m, (g, r)| m.max((g - r).abs()))
        / scale
}
