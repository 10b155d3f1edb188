//! Exact cost gradients by forward propagation of the parameter sensitivities
//! `D_t = ∂x_t/∂θ` and `J_t = ∂ŷ_t/∂θ`, the two supported losses, and
//! finite-difference oracles.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::{simulate, with_params, DynamicalModel, Trajectory};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log(1 + eˣ)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFunction {
    /// `l = ‖y − ŷ‖²`, `l′ = 2ŷ − 2y`.
    SquaredError,
    /// `l = Σ_k softplus(ŷ_k) − y_k ŷ_k` on logits, `l′ = σ(ŷ) − y`; targets in {0, 1}.
    SigmoidCrossEntropy,
}

impl LossFunction {
    pub fn value(&self, yhat: &[f64], y: &[f64]) -> f64 {
        match self {
            LossFunction::SquaredError => {
                yhat.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum()
            }
            LossFunction::SigmoidCrossEntropy => {
                yhat.iter().zip(y).map(|(a, b)| softplus(*a) - b * a).sum()
            }
        }
    }

    /// `l′(ŷ, y) = Ψ(ŷ) − K₃ y`.
    pub fn derivative(&self, yhat: &[f64], y: &[f64]) -> DVector<f64> {
        match self {
            LossFunction::SquaredError => {
                DVector::from_iterator(y.len(), yhat.iter().zip(y).map(|(a, b)| 2.0 * a - 2.0 * b))
            }
            LossFunction::SigmoidCrossEntropy => {
                DVector::from_iterator(y.len(), yhat.iter().zip(y).map(|(a, b)| sigmoid(*a) - b))
            }
        }
    }

    /// `Ψ` applied entrywise.
    pub fn psi(&self, v: f64) -> f64 {
        match self {
            LossFunction::SquaredError => 2.0 * v,
            LossFunction::SigmoidCrossEntropy => sigmoid(v),
        }
    }

    /// `(K₁, K₂)` of the local Lipschitz bound
    /// `|l(ŷ,y) − l(ẑ,y)| ≤ (K₁‖y‖ + K₂ max(‖ŷ‖,‖ẑ‖))‖ŷ − ẑ‖`.
    pub fn k1_k2(&self, n_y: usize) -> (f64, f64) {
        match self {
            LossFunction::SquaredError => (2.0, 2.0),
            LossFunction::SigmoidCrossEntropy => ((n_y as f64).sqrt(), 0.0),
        }
    }

    pub fn k3(&self) -> f64 {
        match self {
            LossFunction::SquaredError => 2.0,
            LossFunction::SigmoidCrossEntropy => 1.0,
        }
    }

    /// Lipschitz constant of `Ψ`.
    pub fn k4(&self) -> f64 {
        match self {
            LossFunction::SquaredError => 2.0,
            LossFunction::SigmoidCrossEntropy => 0.25,
        }
    }
}

/// Which time steps carry a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// One target row per input row; `V = (1/N) Σ_t l(ŷ_t, y_t)`.
    EveryStep,
    /// A single target row for the last step; `V = l(ŷ_{N−1}, y)`.
    FinalStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub x0: DVector<f64>,
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub supervision: Supervision,
}

impl Sequence {
    pub fn new(
        x0: DVector<f64>,
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        supervision: Supervision,
    ) -> Result<Self> {
        let expected = match supervision {
            Supervision::EveryStep => inputs.nrows(),
            Supervision::FinalStep => 1,
        };
        if targets.nrows() != expected || inputs.nrows() == 0 {
            return Err(Error::LengthMismatch {
                inputs: inputs.nrows(),
                targets: targets.nrows(),
            });
        }
        Ok(Self {
            x0,
            inputs,
            targets,
            supervision,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// Target row for time `t`, if that step is supervised.
    pub fn target(&self, t: usize) -> Option<Vec<f64>> {
        let row = match self.supervision {
            Supervision::EveryStep => t,
            Supervision::FinalStep if t + 1 == self.len() => 0,
            Supervision::FinalStep => return None,
        };
        Some(self.targets.row(row).iter().copied().collect())
    }

    /// Weight of each supervised step in the sequence cost.
    pub fn weight(&self) -> f64 {
        match self.supervision {
            Supervision::EveryStep => 1.0 / self.len() as f64,
            Supervision::FinalStep => 1.0,
        }
    }
}

/// A set of sequences whose costs are averaged with uniform weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn new(sequences: Vec<Sequence>) -> Self {
        Self { sequences }
    }

    pub fn single(seq: Sequence) -> Self {
        Self {
            sequences: vec![seq],
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Dataset produced by running `model` itself: every-step targets equal its outputs.
    pub fn from_model(
        model: &dyn DynamicalModel,
        x0s: &[DVector<f64>],
        inputs: &[DMatrix<f64>],
    ) -> Result<Self> {
        let mut sequences = Vec::with_capacity(x0s.len());
        for (x0, u) in x0s.iter().zip(inputs) {
            let tr = simulate(model, x0, u)?;
            sequences.push(Sequence::new(
                x0.clone(),
                u.clone(),
                tr.outputs,
                Supervision::EveryStep,
            )?);
        }
        Ok(Self { sequences })
    }
}

/// Sensitivities along one simulated sequence.
#[derive(Debug, Clone)]
pub struct SensitivityTrace {
    pub trajectory: Trajectory,
    /// `D_t`, `N_x × N_θ`, with `D_0 = 0`.
    pub d: Vec<DMatrix<f64>>,
    /// `J_t = C_t D_t + F_t`, `N_y × N_θ`.
    pub j: Vec<DMatrix<f64>>,
}

fn check_finite(m: &DMatrix<f64>, step: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step })
    }
}

/// `D_{t+1} = A_t D_t + B_t`, `D_0 = 0`, `J_t = C_t D_t + F_t` along the trajectory from `x0`.
pub fn propagate_sensitivity(
    model: &dyn DynamicalModel,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
) -> Result<SensitivityTrace> {
    let trajectory = simulate(model, x0, inputs)?;
    let n = trajectory.len();
    let mut d = Vec::with_capacity(n);
    let mut j = Vec::with_capacity(n);
    let mut dt = DMatrix::zeros(model.state_dim(), model.n_params());
    for t in 0..n {
        let jac = model.jacobians(&trajectory.state(t), &trajectory.input(t));
        let jt = &jac.c * &dt + &jac.f;
        check_finite(&jt, t)?;
        j.push(jt);
        let next = &jac.a * &dt + &jac.b;
        check_finite(&next, t + 1)?;
        d.push(std::mem::replace(&mut dt, next));
    }
    Ok(SensitivityTrace { trajectory, d, j })
}

/// Cost of one sequence.
pub fn sequence_cost(model: &dyn DynamicalModel, seq: &Sequence, loss: LossFunction) -> Result<f64> {
    let tr = simulate(model, &seq.x0, &seq.inputs)?;
    check_targets(model, seq)?;
    let mut total = 0.0;
    for t in 0..seq.len() {
        if let Some(y) = seq.target(t) {
            let yhat: Vec<f64> = tr.outputs.row(t).iter().copied().collect();
            total += loss.value(&yhat, &y);
        }
    }
    Ok(total * seq.weight())
}

fn check_targets(model: &dyn DynamicalModel, seq: &Sequence) -> Result<()> {
    if seq.targets.ncols() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            what: "targets",
            expected: model.output_dim(),
            got: seq.targets.ncols(),
        });
    }
    Ok(())
}

/// `∇V` of one sequence by forward sensitivities: `Σ_t w·J_tᵀ l′(ŷ_t, y_t)`.
pub fn sequence_gradient(
    model: &dyn DynamicalModel,
    seq: &Sequence,
    loss: LossFunction,
) -> Result<(f64, DVector<f64>)> {
    check_targets(model, seq)?;
    let trajectory = simulate(model, &seq.x0, &seq.inputs)?;
    let mut dt = DMatrix::zeros(model.state_dim(), model.n_params());
    let mut grad = DVector::zeros(model.n_params());
    let mut value = 0.0;
    for t in 0..seq.len() {
        let x = trajectory.state(t);
        let z = trajectory.input(t);
        let jac = model.jacobians(&x, &z);
        if let Some(y) = seq.target(t) {
            let yhat: Vec<f64> = trajectory.outputs.row(t).iter().copied().collect();
            value += loss.value(&yhat, &y);
            let jt = &jac.c * &dt + &jac.f;
            check_finite(&jt, t)?;
            grad += jt.tr_mul(&loss.derivative(&yhat, &y));
        }
        if t + 1 < seq.len() {
            dt = &jac.a * &dt + &jac.b;
            check_finite(&dt, t + 1)?;
        }
    }
    let w = seq.weight();
    Ok((value * w, grad * w))
}

fn nonempty(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        Err(Error::invalid("dataset is empty"))
    } else {
        Ok(())
    }
}

/// `V(θ)`: uniform average of the per-sequence costs.
pub fn cost(model: &dyn DynamicalModel, data: &Dataset, loss: LossFunction) -> Result<f64> {
    nonempty(data)?;
    let parts: Vec<Result<f64>> = data
        .sequences
        .par_iter()
        .map(|s| sequence_cost(model, s, loss))
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / data.len() as f64)
}

/// `(V, ∇V)` with per-sequence results reduced in sequence order.
pub fn cost_and_gradient(
    model: &dyn DynamicalModel,
    data: &Dataset,
    loss: LossFunction,
) -> Result<(f64, DVector<f64>)> {
    nonempty(data)?;
    let parts: Vec<Result<(f64, DVector<f64>)>> = data
        .sequences
        .par_iter()
        .map(|s| sequence_gradient(model, s, loss))
        .collect();
    let mut v = 0.0;
    let mut g = DVector::zeros(model.n_params());
    for p in parts {
        let (pv, pg) = p?;
        v += pv;
        g += pg;
    }
    let n = data.len() as f64;
    Ok((v / n, g / n))
}

/// `∇V = (1/N) Σ_t J_tᵀ l′(ŷ_t, y_t)`, averaged over sequences.
pub fn gradient(model: &dyn DynamicalModel, data: &Dataset, loss: LossFunction) -> Result<DVector<f64>> {
    cost_and_gradient(model, data, loss).map(|(_, g)| g)
}

/// Central differences of `f` around `theta`, one coordinate at a time.
pub fn central_difference<F>(f: F, theta: &[f64], step: f64) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut g = DVector::zeros(theta.len());
    let mut th = theta.to_vec();
    for i in 0..theta.len() {
        th[i] = theta[i] + step;
        let up = f(&th)?;
        th[i] = theta[i] - step;
        let down = f(&th)?;
        th[i] = theta[i];
        g[i] = (up - down) / (2.0 * step);
    }
    Ok(g)
}

/// Finite-difference gradient of [`cost`].
pub fn fd_gradient(
    model: &dyn DynamicalModel,
    data: &Dataset,
    loss: LossFunction,
    step: f64,
) -> Result<DVector<f64>> {
    central_difference(
        |th| {
            let m = with_params(model, th)?;
            cost(m.as_ref(), data, loss)
        },
        model.params().values(),
        step,
    )
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}
