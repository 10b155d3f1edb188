use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::expm::{dexp_basis, n_lower, realize_orthogonal, skew_from_lower};
use super::{fill_uniform, matvec_acc, Readout};
use crate::error::Result;
use crate::statespace::{DynamicalModel, Jacobians, LayoutBuilder, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `v` and the output `a`.
    #[inline]
    pub fn derivative(self, v: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `h' = φ(W h + U z + b)` with `W = exp(S_raw − S_rawᵀ)`.
///
/// θ holds the compact lower entries of `S_raw` (block `S_raw`), then `U`,
/// then optionally `b`, then the readout. `W` is rebuilt whenever θ changes.
#[derive(Debug, Clone)]
pub struct OrthogonalRnnCell {
    hidden: usize,
    input_dim: usize,
    bias: bool,
    activation: Activation,
    readout: Readout,
    params: ParameterVector,
    w: DMatrix<f64>,
    dw: OnceLock<Vec<DMatrix<f64>>>,
}

impl OrthogonalRnnCell {
    pub fn zeros(
        hidden: usize,
        input_dim: usize,
        bias: bool,
        activation: Activation,
        readout: Readout,
    ) -> Self {
        let mut b = LayoutBuilder::new().block("S_raw", n_lower(hidden), 1);
        if input_dim > 0 {
            b = b.block("U", hidden, input_dim);
        }
        if bias {
            b = b.block("b", hidden, 1);
        }
        let params = readout.add_blocks(b, hidden).zeros();
        Self {
            hidden,
            input_dim,
            bias,
            activation,
            readout,
            params,
            w: DMatrix::identity(hidden, hidden),
            dw: OnceLock::new(),
        }
    }

    /// `S_raw` entries uniform in `±π/N_h`; `U`, `W_y` uniform in `±1/√N_h`; biases zero.
    pub fn random<R: Rng + ?Sized>(
        hidden: usize,
        input_dim: usize,
        bias: bool,
        activation: Activation,
        readout: Readout,
        rng: &mut R,
    ) -> Self {
        let mut cell = Self::zeros(hidden, input_dim, bias, activation, readout);
        let bound = 1.0 / (hidden as f64).sqrt();
        fill_uniform(cell.params.block_mut("S_raw").unwrap(), PI / hidden as f64, rng);
        if input_dim > 0 {
            fill_uniform(cell.params.block_mut("U").unwrap(), bound, rng);
        }
        if let Readout::Linear(_) = readout {
            fill_uniform(cell.params.block_mut("W_y").unwrap(), bound, rng);
        }
        cell.refresh();
        cell
    }

    fn refresh(&mut self) {
        self.w = realize_orthogonal(self.params.block("S_raw").unwrap(), self.hidden);
        self.dw = OnceLock::new();
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    /// The realized recurrent matrix.
    pub fn recurrent(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `S = S_raw − S_rawᵀ`.
    pub fn skew(&self) -> DMatrix<f64> {
        skew_from_lower(self.params.block("S_raw").unwrap(), self.hidden)
    }

    fn dw(&self) -> &[DMatrix<f64>] {
        self.dw.get_or_init(|| dexp_basis(&self.skew()))
    }

    pub(crate) fn preactivation(&self, h: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.hidden;
        let mut acc = vec![0.0; n];
        for r in 0..n {
            let mut s = 0.0;
            for (j, hj) in h.iter().enumerate() {
                s += self.w[(r, j)] * hj;
            }
            acc[r] = s;
        }
        if self.input_dim > 0 {
            matvec_acc(&mut acc, self.params.block("U").unwrap(), z);
        }
        if self.bias {
            for (v, b) in acc.iter_mut().zip(self.params.block("b").unwrap()) {
                *v += b;
            }
        }
        acc
    }
}

impl DynamicalModel for OrthogonalRnnCell {
    fn name(&self) -> &str {
        "ornn"
    }
    fn state_dim(&self) -> usize {
        self.hidden
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.readout.output_dim(self.hidden)
    }
    fn params(&self) -> &ParameterVector {
        &self.params
    }
    fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        self.params.set_values(values)?;
        self.refresh();
        Ok(())
    }

    fn step(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let pre = self.preactivation(x.as_slice(), z.as_slice());
        DVector::from_iterator(self.hidden, pre.into_iter().map(|v| self.activation.apply(v)))
    }

    fn output(&self, x: &DVector<f64>, _z: &DVector<f64>) -> DVector<f64> {
        self.readout.apply(&self.params, x.as_slice())
    }

    fn jacobians(&self, x: &DVector<f64>, z: &DVector<f64>) -> Jacobians {
        let n = self.hidden;
        let nz = self.input_dim;
        let p = &self.params;
        let h = x.as_slice();
        let zs = z.as_slice();
        let pre = self.preactivation(h, zs);
        let d: Vec<f64> = pre
            .iter()
            .map(|&v| self.activation.derivative(v, self.activation.apply(v)))
            .collect();
        let a = DMatrix::from_fn(n, n, |r, j| d[r] * self.w[(r, j)]);
        let mut b = DMatrix::zeros(n, p.len());
        let so = p.spec("S_raw").unwrap().offset;
        for (k, dwk) in self.dw().iter().enumerate() {
            let col = dwk * x;
            for r in 0..n {
                b[(r, so + k)] = d[r] * col[r];
            }
        }
        if nz > 0 {
            let uo = p.spec("U").unwrap().offset;
            for r in 0..n {
                for j in 0..nz {
                    b[(r, uo + r * nz + j)] = d[r] * zs[j];
                }
            }
        }
        if self.bias {
            let bo = p.spec("b").unwrap().offset;
            for r in 0..n {
                b[(r, bo + r)] = d[r];
            }
        }
        let (c, f) = self.readout.jacobians(p, h, n);
        Jacobians { a, b, c, f }
    }

    fn state_jacobian(&self, x: &DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
        let pre = self.preactivation(x.as_slice(), z.as_slice());
        DMatrix::from_fn(self.hidden, self.hidden, |r, j| {
            self.activation.derivative(pre[r], self.activation.apply(pre[r])) * self.w[(r, j)]
        })
    }

    fn clone_box(&self) -> Box<dyn DynamicalModel> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, orthogonality_defect};
    use crate::testutil::{assert_jacobians_match_fd, random_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn state_jacobian_is_diag_times_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = OrthogonalRnnCell::random(5, 2, true, Activation::Tanh, Readout::Identity, &mut rng);
        let x = random_state(5, 1.0, &mut rng);
        let z = random_state(2, 1.0, &mut rng);
        let pre = cell.preactivation(x.as_slice(), z.as_slice());
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            5,
            pre.iter().map(|v| 1.0 - v.tanh().powi(2)),
        ));
        let a = cell.jacobians(&x, &z).a;
        assert!(max_abs(&(a - d * cell.recurrent())) < 1e-15);
    }

    #[test]
    fn recurrent_matrix_stays_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cell =
            OrthogonalRnnCell::random(8, 1, false, Activation::Tanh, Readout::Linear(1), &mut rng);
        for _ in 0..20 {
            let th = random_state(cell.n_params(), 3.0, &mut rng);
            cell.set_param_values(th.as_slice()).unwrap();
            assert!(orthogonality_defect(cell.recurrent()) < 1e-8);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (bias, nz, readout, act) in [
            (true, 2, Readout::Linear(2), Activation::Tanh),
            (false, 0, Readout::Identity, Activation::Tanh),
            (true, 1, Readout::Linear(1), Activation::Relu),
        ] {
            for _ in 0..20 {
                let mut cell = OrthogonalRnnCell::random(4, nz, bias, act, readout, &mut rng);
                let th = random_state(cell.n_params(), 1.0, &mut rng);
                cell.set_param_values(th.as_slice()).unwrap();
                let x = random_state(4, 1.0, &mut rng);
                let z = random_state(nz, 1.0, &mut rng);
                assert_jacobians_match_fd(&cell, &x, &z, 1e-5);
            }
        }
    }
}
