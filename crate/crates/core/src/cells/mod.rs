//! Concrete recurrent cells written as [`DynamicalModel`]s with hand-derived
//! Jacobians, plus the two constraint mechanisms: spectral projection
//! (stable LSTM) and the exponential map onto orthogonal matrices.

mod document;
mod expm;
mod lstm;
mod orthogonal;
mod stable;
mod vanilla;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::statespace::{DynamicalModel, Jacobians, LayoutBuilder, ParameterVector};

pub use document::{BlockValue, CellDocument, FORMAT_VERSION};
pub use expm::{dexp, dexp_adjoint, realize_orthogonal, skew_from_lower, n_lower};
pub use lstm::LstmCell;
pub use orthogonal::{Activation, OrthogonalRnnCell};
pub use stable::{ProjectionConfig, StableLstmCell, DEFAULT_TARGET_NORM};
pub use vanilla::VanillaRnnCell;

/// Recurrent weight blocks of an LSTM, in parameter-vector order.
pub const LSTM_RECURRENT: [&str; 4] = ["W_hi", "W_hf", "W_hg", "W_ho"];
pub(crate) const LSTM_INPUT: [&str; 4] = ["U_i", "U_f", "U_g", "U_o"];
pub(crate) const LSTM_BIAS: [&str; 4] = ["b_i", "b_f", "b_g", "b_o"];

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out[r] += Σ_j w[r, j]·x[j]` for a row-major `rows × x.len()` block.
#[inline]
pub(crate) fn matvec_acc(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wj, xj) in row.iter().zip(x) {
            acc += wj * xj;
        }
        *o += acc;
    }
}

/// Output map `g` applied to the hidden vector `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// `ŷ = h`; no parameters.
    Identity,
    /// `ŷ = W_y h + b_y` with `n` outputs; `W_y`, `b_y` are part of θ.
    Linear(usize),
}

impl Readout {
    pub fn output_dim(&self, hidden: usize) -> usize {
        match self {
            Readout::Identity => hidden,
            Readout::Linear(n) => *n,
        }
    }

    pub(crate) fn add_blocks(&self, b: LayoutBuilder, hidden: usize) -> LayoutBuilder {
        match self {
            Readout::Identity => b,
            Readout::Linear(n) => b.block("W_y", *n, hidden).block("b_y", *n, 1),
        }
    }

    pub(crate) fn apply(&self, p: &ParameterVector, h: &[f64]) -> DVector<f64> {
        match self {
            Readout::Identity => DVector::from_column_slice(h),
            Readout::Linear(n) => {
                let mut y = p.block("b_y").expect("readout bias").to_vec();
                let mut acc = vec![0.0; *n];
                matvec_acc(&mut acc, p.block("W_y").expect("readout weights"), h);
                for (yi, ai) in y.iter_mut().zip(acc) {
                    *yi += ai;
                }
                DVector::from_vec(y)
            }
        }
    }

    /// Fill `C` (columns `0..hidden` of the state) and `F`.
    pub(crate) fn jacobians(
        &self,
        p: &ParameterVector,
        h: &[f64],
        state_dim: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let hidden = h.len();
        let ny = self.output_dim(hidden);
        let mut c = DMatrix::zeros(ny, state_dim);
        let mut f = DMatrix::zeros(ny, p.len());
        match self {
            Readout::Identity => {
                for i in 0..hidden {
                    c[(i, i)] = 1.0;
                }
            }
            Readout::Linear(n) => {
                let w = p.block("W_y").expect("readout weights");
                let wo = p.spec("W_y").unwrap().offset;
                let bo = p.spec("b_y").unwrap().offset;
                for k in 0..*n {
                    for j in 0..hidden {
                        c[(k, j)] = w[k * hidden + j];
                        f[(k, wo + k * hidden + j)] = h[j];
                    }
                    f[(k, bo + k)] = 1.0;
                }
            }
        }
        (c, f)
    }
}

/// Random orthogonal `n × n` matrix (QR of a Gaussian matrix, sign-corrected).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub(crate) fn fill_uniform<R: Rng + ?Sized>(dst: &mut [f64], bound: f64, rng: &mut R) {
    for v in dst {
        *v = rng.random_range(-bound..=bound);
    }
}

/// Any of the supported cells, for code that picks the kind at run time.
#[derive(Debug, Clone)]
pub enum Cell {
    Lstm(LstmCell),
    StableLstm(StableLstmCell),
    Orthogonal(OrthogonalRnnCell),
    Vanilla(VanillaRnnCell),
}

impl Cell {
    pub fn kind(&self) -> &'static str {
        match self {
            Cell::Lstm(_) => "lstm",
            Cell::StableLstm(_) => "slstm",
            Cell::Orthogonal(_) => "ornn",
            Cell::Vanilla(_) => "vanilla",
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Cell::Lstm(c) => c.hidden(),
            Cell::StableLstm(c) => c.lstm().hidden(),
            Cell::Orthogonal(c) => c.hidden(),
            Cell::Vanilla(c) => c.hidden(),
        }
    }

    pub fn model(&self) -> &dyn DynamicalModel {
        match self {
            Cell::Lstm(c) => c,
            Cell::StableLstm(c) => c,
            Cell::Orthogonal(c) => c,
            Cell::Vanilla(c) => c,
        }
    }

    pub fn model_mut(&mut self) -> &mut dyn DynamicalModel {
        match self {
            Cell::Lstm(c) => c,
            Cell::StableLstm(c) => c,
            Cell::Orthogonal(c) => c,
            Cell::Vanilla(c) => c,
        }
    }

    /// Hook run after each optimizer update: the stable LSTM re-projects.
    pub fn after_update(&mut self) {
        if let Cell::StableLstm(c) = self {
            c.project();
        }
    }

    /// Hidden part of a state vector (LSTM states are `(h, c)`).
    pub fn hidden_of<'a>(&self, x: &'a DVector<f64>) -> &'a [f64] {
        &x.as_slice()[..self.hidden()]
    }
}

impl DynamicalModel for Cell {
    fn name(&self) -> &str {
        self.model().name()
    }
    fn state_dim(&self) -> usize {
        self.model().state_dim()
    }
    fn input_dim(&self) -> usize {
        self.model().input_dim()
    }
    fn output_dim(&self) -> usize {
        self.model().output_dim()
    }
    fn params(&self) -> &ParameterVector {
        self.model().params()
    }
    fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        self.model_mut().set_param_values(values)
    }
    fn step(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.model().step(x, z)
    }
    fn output(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.model().output(x, z)
    }
    fn jacobians(&self, x: &DVector<f64>, z: &DVector<f64>) -> Jacobians {
        self.model().jacobians(x, z)
    }
    fn state_jacobian(&self, x: &DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
        self.model().state_jacobian(x, z)
    }
    fn clone_box(&self) -> Box<dyn DynamicalModel> {
        Box::new(self.clone())
    }
}

/// The two-unit chaotic LSTM with zero input and no biases, `h0 = c0 = [0.5, 0.5]`.
pub mod appendix_c {
    use super::*;

    pub const DOCUMENT: &str = include_str!("../../data/appendix_c.json");

    pub fn document() -> CellDocument {
        serde_json::from_str(DOCUMENT).expect("shipped weights parse")
    }

    /// The data-generating cell with `θ_true`.
    pub fn cell() -> LstmCell {
        match document().into_cell().expect("shipped weights are valid") {
            Cell::Lstm(c) => c,
            _ => unreachable!("shipped document is an LSTM"),
        }
    }

    /// `x0 = (h0, c0)`.
    pub fn initial_state() -> DVector<f64> {
        DVector::from_vec(document().initial_state.expect("shipped initial state"))
    }

    /// Cell with `θ(s) = s·θ_true`.
    pub fn scaled(s: f64) -> LstmCell {
        let mut c = cell();
        let p = c.params().scaled(s);
        c.set_param_values(p.values()).unwrap();
        c
    }
}
