//! Discrete-time state-space models `x_{t+1} = f(x_t, z_t; θ)`, `ŷ_t = g(x_t, z_t; θ)`
//! and the generic machinery built on them: simulation (open and closed loop),
//! fixed points, Lyapunov exponents and Lipschitz estimation.

mod fd;
mod fixed_point;
mod io;
mod lipschitz;
mod lyapunov;
mod params;
pub mod toy;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use fd::{fd_jacobians, relative_deviation};
pub use fixed_point::{find_fixed_points, FixedPoint, FixedPointSearch, SeedFailure, Stability};
pub use io::TrajectoryEnvelope;
pub use lipschitz::{estimate_lipschitz_f, joint_jacobian_norm, Region, Wrt};
pub use lyapunov::{lyapunov_exponent, lyapunov_spectrum};
pub use params::{LayoutBuilder, ParamBlock, ParameterVector};

/// Jacobians of the step and output maps at one point.
#[derive(Debug, Clone)]
pub struct Jacobians {
    /// ∂f/∂x, `N_x × N_x`.
    pub a: DMatrix<f64>,
    /// ∂f/∂θ, `N_x × N_θ`.
    pub b: DMatrix<f64>,
    /// ∂g/∂x, `N_y × N_x`.
    pub c: DMatrix<f64>,
    /// ∂g/∂θ, `N_y × N_θ`.
    pub f: DMatrix<f64>,
}

/// The `(f, g)` pair of a recurrent model together with its parameter vector.
///
/// Implementations are immutable while being simulated and may be shared
/// across threads; parameters change only through [`DynamicalModel::set_param_values`].
pub trait DynamicalModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn params(&self) -> &ParameterVector;
    fn set_param_values(&mut self, values: &[f64]) -> Result<()>;

    fn step(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64>;
    fn output(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64>;
    fn jacobians(&self, x: &DVector<f64>, z: &DVector<f64>) -> Jacobians;

    /// ∂f/∂x only; override when it is much cheaper than the full set.
    fn state_jacobian(&self, x: &DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
        self.jacobians(x, z).a
    }

    fn clone_box(&self) -> Box<dyn DynamicalModel>;

    fn n_params(&self) -> usize {
        self.params().len()
    }
}

impl Clone for Box<dyn DynamicalModel> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Clone of `model` with its parameters replaced.
pub fn with_params(model: &dyn DynamicalModel, values: &[f64]) -> Result<Box<dyn DynamicalModel>> {
    let mut m = model.clone_box();
    m.set_param_values(values)?;
    Ok(m)
}

/// States, outputs and inputs of one simulation, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
    pub t0: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, t: usize) -> DVector<f64> {
        self.states.row(t).transpose()
    }

    pub fn output(&self, t: usize) -> DVector<f64> {
        self.outputs.row(t).transpose()
    }

    pub fn input(&self, t: usize) -> DVector<f64> {
        self.inputs.row(t).transpose()
    }
}

/// `n` copies of the constant input `u` stacked as rows.
pub fn constant_inputs(u: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, u.len(), |_, c| u[c])
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn check_dims(model: &dyn DynamicalModel, x0: &DVector<f64>, nz: usize) -> Result<()> {
    if x0.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: model.state_dim(),
            got: x0.len(),
        });
    }
    if nz != model.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: model.input_dim(),
            got: nz,
        });
    }
    Ok(())
}

/// Open-loop simulation: `states[0] = x0`, `states[t+1] = f(states[t], inputs[t])`,
/// `outputs[t] = g(states[t], inputs[t])`. One row per input row.
pub fn simulate(
    model: &dyn DynamicalModel,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
) -> Result<Trajectory> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::invalid("simulate needs at least one input row"));
    }
    check_dims(model, x0, inputs.ncols())?;
    if !all_finite(x0) {
        return Err(Error::NonFiniteState { step: 0 });
    }
    let mut states = DMatrix::zeros(n, model.state_dim());
    let mut outputs = DMatrix::zeros(n, model.output_dim());
    let mut x = x0.clone();
    for t in 0..n {
        let z = inputs.row(t).transpose();
        let y = model.output(&x, &z);
        if !all_finite(&y) {
            return Err(Error::NonFiniteState { step: t });
        }
        states.set_row(t, &x.transpose());
        outputs.set_row(t, &y.transpose());
        if t + 1 < n {
            x = model.step(&x, &z);
            if !all_finite(&x) {
                return Err(Error::NonFiniteState { step: t + 1 });
            }
        }
    }
    Ok(Trajectory {
        states,
        outputs,
        inputs: inputs.clone(),
        t0: 0,
    })
}

/// Map from a predicted output to the next input in closed-loop operation.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// `z_{t+1} = ŷ_t`.
    Identity,
    /// `z_{t+1} = onehot(argmax ŷ_t)`; ties resolve to the lowest index.
    ArgmaxOneHot,
    /// `z_{t+1} = (ŷ_t, u)`: inference counterpart of teacher forcing.
    WithExogenous(DVector<f64>),
}

impl Feedback {
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Feedback::Identity => y.clone(),
            Feedback::ArgmaxOneHot => {
                let mut best = 0;
                for i in 1..y.len() {
                    if y[i] > y[best] {
                        best = i;
                    }
                }
                let mut z = DVector::zeros(y.len());
                if !y.is_empty() {
                    z[best] = 1.0;
                }
                z
            }
            Feedback::WithExogenous(u) => {
                let mut z = DVector::zeros(y.len() + u.len());
                z.rows_mut(0, y.len()).copy_from(y);
                z.rows_mut(y.len(), u.len()).copy_from(u);
                z
            }
        }
    }
}

/// Closed-loop simulation: the model's own prediction is fed back as the next input,
/// `z_{t+1} = feedback(ŷ_t)`. Equivalent to an autonomous system on the extended
/// state `(x_t, ŷ_t)`.
pub fn simulate_closed_loop(
    model: &dyn DynamicalModel,
    x0: &DVector<f64>,
    z0: &DVector<f64>,
    horizon: usize,
    feedback: &dyn Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::invalid("closed-loop horizon must be positive"));
    }
    check_dims(model, x0, z0.len())?;
    let mut states = DMatrix::zeros(horizon, model.state_dim());
    let mut outputs = DMatrix::zeros(horizon, model.output_dim());
    let mut inputs = DMatrix::zeros(horizon, model.input_dim());
    let mut x = x0.clone();
    let mut z = z0.clone();
    for t in 0..horizon {
        let y = model.output(&x, &z);
        if !all_finite(&x) || !all_finite(&y) {
            return Err(Error::NonFiniteState { step: t });
        }
        states.set_row(t, &x.transpose());
        outputs.set_row(t, &y.transpose());
        inputs.set_row(t, &z.transpose());
        if t + 1 < horizon {
            let next_z = feedback(&y);
            if next_z.len() != model.input_dim() {
                return Err(Error::DimensionMismatch {
                    what: "feedback output",
                    expected: model.input_dim(),
                    got: next_z.len(),
                });
            }
            x = model.step(&x, &z);
            z = next_z;
        }
    }
    Ok(Trajectory {
        states,
        outputs,
        inputs,
        t0: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::toy::LinearSystem;
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn geometric_decay() {
        let m = LinearSystem::scalar(0.5);
        let tr = simulate(&m, &dvector![1.0], &DMatrix::zeros(3, 0)).unwrap();
        assert_eq!(tr.states.column(0).as_slice(), &[1.0, 0.5, 0.25]);
        assert_eq!(tr.outputs.column(0).as_slice(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn divergence_reports_step() {
        let m = LinearSystem::scalar(1e200);
        let err = simulate(&m, &dvector![1e200], &DMatrix::zeros(5, 0)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { step: 1 }));
    }

    #[test]
    fn rejects_bad_dimensions() {
        let m = LinearSystem::scalar(0.5);
        assert!(simulate(&m, &dvector![1.0, 2.0], &DMatrix::zeros(3, 0)).is_err());
        assert!(simulate(&m, &dvector![1.0], &DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn closed_loop_identity_is_constant() {
        // f(x, z) = z, g(x) = x
        let m = LinearSystem::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        );
        let c = dvector![0.3, -0.7];
        let fb = Feedback::Identity;
        let tr = simulate_closed_loop(&m, &c, &c, 20, &|y| fb.apply(y)).unwrap();
        for t in 0..20 {
            assert_eq!(tr.state(t), c);
        }
    }

    #[test]
    fn argmax_feedback_is_one_hot() {
        let a = DMatrix::from_fn(4, 4, |r, c| ((r * 3 + c * 5) % 7) as f64 / 7.0 - 0.4);
        let m = LinearSystem::new(a, DMatrix::identity(4, 4), DMatrix::identity(4, 4));
        let fb = Feedback::ArgmaxOneHot;
        let z0 = dvector![1.0, 0.0, 0.0, 0.0];
        let tr = simulate_closed_loop(&m, &dvector![0.1, 0.2, -0.3, 0.4], &z0, 30, &|y| {
            fb.apply(y)
        })
        .unwrap();
        for t in 0..30 {
            let z = tr.input(t);
            assert_eq!(z.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(z.iter().filter(|v| **v == 0.0).count(), 3);
        }
    }

    #[test]
    fn exogenous_feedback_concatenates() {
        let fb = Feedback::WithExogenous(dvector![0.25]);
        assert_eq!(fb.apply(&dvector![1.5]), dvector![1.5, 0.25]);
    }
}
