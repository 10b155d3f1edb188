use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{
    fill_uniform, matvec_acc, random_orthogonal, sigmoid, Readout, LSTM_BIAS, LSTM_INPUT,
    LSTM_RECURRENT,
};
use crate::error::Result;
use crate::statespace::{DynamicalModel, Jacobians, LayoutBuilder, ParameterVector};

/// LSTM cell with state `x = (h, c)`, `N_x = 2·N_h`:
///
/// ```text
/// c' = σ(W_hf h + U_f z + b_f) ∘ c + σ(W_hi h + U_i z + b_i) ∘ tanh(W_hg h + U_g z + b_g)
/// h' = σ(W_ho h + U_o z + b_o) ∘ tanh(c')
/// ```
///
/// Input and bias terms are present only when enabled; with both disabled the
/// step is exactly the bias-free, input-free cell.
#[derive(Debug, Clone)]
pub struct LstmCell {
    hidden: usize,
    input_dim: usize,
    biases: bool,
    readout: Readout,
    params: ParameterVector,
}

/// Gate activations at one state, kept for Jacobian assembly.
pub(crate) struct LstmGates {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c_next: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl LstmCell {
    /// All-zero parameters.
    pub fn zeros(hidden: usize, input_dim: usize, biases: bool, readout: Readout) -> Self {
        let mut b = LayoutBuilder::new();
        for name in LSTM_RECURRENT {
            b = b.block(name, hidden, hidden);
        }
        if input_dim > 0 {
            for name in LSTM_INPUT {
                b = b.block(name, hidden, input_dim);
            }
        }
        if biases {
            for name in LSTM_BIAS {
                b = b.block(name, hidden, 1);
            }
        }
        let params = readout.add_blocks(b, hidden).zeros();
        Self {
            hidden,
            input_dim,
            biases,
            readout,
            params,
        }
    }

    /// Orthogonal recurrent blocks (gain 1), uniform `±1/√N_h` input and
    /// readout weights, zero biases except the forget gate at +1.
    pub fn random<R: Rng + ?Sized>(
        hidden: usize,
        input_dim: usize,
        biases: bool,
        readout: Readout,
        rng: &mut R,
    ) -> Self {
        let mut cell = Self::zeros(hidden, input_dim, biases, readout);
        let bound = 1.0 / (hidden as f64).sqrt();
        for name in LSTM_RECURRENT {
            let q = random_orthogonal(hidden, rng);
            cell.params.set_block_matrix(name, &q).unwrap();
        }
        if input_dim > 0 {
            for name in LSTM_INPUT {
                fill_uniform(cell.params.block_mut(name).unwrap(), bound, rng);
            }
        }
        if biases {
            cell.params.block_mut("b_f").unwrap().fill(1.0);
        }
        if let Readout::Linear(_) = readout {
            fill_uniform(cell.params.block_mut("W_y").unwrap(), bound, rng);
        }
        cell
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn has_biases(&self) -> bool {
        self.biases
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    fn preactivation(&self, k: usize, h: &[f64], z: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let mut pre = vec![0.0; self.hidden];
        matvec_acc(&mut pre, p.block(LSTM_RECURRENT[k]).unwrap(), h);
        if self.input_dim > 0 {
            matvec_acc(&mut pre, p.block(LSTM_INPUT[k]).unwrap(), z);
        }
        if self.biases {
            for (v, b) in pre.iter_mut().zip(p.block(LSTM_BIAS[k]).unwrap()) {
                *v += b;
            }
        }
        pre
    }

    pub(crate) fn gates(&self, x: &[f64], z: &[f64]) -> LstmGates {
        let n = self.hidden;
        let (h, c) = x.split_at(n);
        let i: Vec<f64> = self.preactivation(0, h, z).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = self.preactivation(1, h, z).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = self.preactivation(2, h, z).into_iter().map(f64::tanh).collect();
        let o: Vec<f64> = self.preactivation(3, h, z).into_iter().map(sigmoid).collect();
        let c_next: Vec<f64> = (0..n).map(|r| f[r] * c[r] + i[r] * g[r]).collect();
        let tanh_c: Vec<f64> = c_next.iter().map(|v| v.tanh()).collect();
        LstmGates {
            i,
            f,
            g,
            o,
            c_next,
            tanh_c,
        }
    }
}

impl DynamicalModel for LstmCell {
    fn name(&self) -> &str {
        "lstm"
    }
    fn state_dim(&self) -> usize {
        2 * self.hidden
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
        self.params.set_values(values)
    }

    fn step(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let n = self.hidden;
        let gt = self.gates(x.as_slice(), z.as_slice());
        let mut out = DVector::zeros(2 * n);
        for r in 0..n {
            out[r] = gt.o[r] * gt.tanh_c[r];
            out[n + r] = gt.c_next[r];
        }
        out
    }

    fn output(&self, x: &DVector<f64>, _z: &DVector<f64>) -> DVector<f64> {
        self.readout.apply(&self.params, &x.as_slice()[..self.hidden])
    }

    fn jacobians(&self, x: &DVector<f64>, z: &DVector<f64>) -> Jacobians {
        let n = self.hidden;
        let nz = self.input_dim;
        let xs = x.as_slice();
        let (h, c) = xs.split_at(n);
        let zs = z.as_slice();
        let p = &self.params;
        let gt = self.gates(xs, zs);

        // ∂c'_r/∂pre_k and ∂h'_r/∂pre_k for gates k = i, f, g, o
        let mut dc = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut dh = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for r in 0..n {
            let (i, f, g, o) = (gt.i[r], gt.f[r], gt.g[r], gt.o[r]);
            let tc = gt.tanh_c[r];
            let through_c = o * (1.0 - tc * tc);
            dc[0][r] = i * (1.0 - i) * g;
            dc[1][r] = f * (1.0 - f) * c[r];
            dc[2][r] = i * (1.0 - g * g);
            for k in 0..3 {
                dh[k][r] = through_c * dc[k][r];
            }
            dh[3][r] = o * (1.0 - o) * tc;
        }

        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..4 {
            let w = p.block(LSTM_RECURRENT[k]).unwrap();
            for r in 0..n {
                for j in 0..n {
                    let wrj = w[r * n + j];
                    a[(r, j)] += dh[k][r] * wrj;
                    a[(n + r, j)] += dc[k][r] * wrj;
                }
            }
        }
        for r in 0..n {
            let through_c = gt.o[r] * (1.0 - gt.tanh_c[r] * gt.tanh_c[r]);
            a[(r, n + r)] = through_c * gt.f[r];
            a[(n + r, n + r)] = gt.f[r];
        }

        let mut b = DMatrix::zeros(2 * n, p.len());
        for k in 0..4 {
            let off = p.spec(LSTM_RECURRENT[k]).unwrap().offset;
            for r in 0..n {
                for j in 0..n {
                    b[(r, off + r * n + j)] = dh[k][r] * h[j];
                    b[(n + r, off + r * n + j)] = dc[k][r] * h[j];
                }
            }
            if nz > 0 {
                let off = p.spec(LSTM_INPUT[k]).unwrap().offset;
                for r in 0..n {
                    for j in 0..nz {
                        b[(r, off + r * nz + j)] = dh[k][r] * zs[j];
                        b[(n + r, off + r * nz + j)] = dc[k][r] * zs[j];
                    }
                }
            }
            if self.biases {
                let off = p.spec(LSTM_BIAS[k]).unwrap().offset;
                for r in 0..n {
                    b[(r, off + r)] = dh[k][r];
                    b[(n + r, off + r)] = dc[k][r];
                }
            }
        }

        let (cm, f) = self.readout.jacobians(p, h, 2 * n);
        Jacobians { a, b, c: cm, f }
    }

    fn state_jacobian(&self, x: &DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
        // B is the expensive part for large θ; A alone is cheap to recompute.
        let n = self.hidden;
        let xs = x.as_slice();
        let c = &xs[n..];
        let p = &self.params;
        let gt = self.gates(xs, z.as_slice());
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..4 {
            let w = p.block(LSTM_RECURRENT[k]).unwrap();
            for r in 0..n {
                let (i, f, g, o) = (gt.i[r], gt.f[r], gt.g[r], gt.o[r]);
                let tc = gt.tanh_c[r];
                let dck = match k {
                    0 => i * (1.0 - i) * g,
                    1 => f * (1.0 - f) * c[r],
                    2 => i * (1.0 - g * g),
                    _ => 0.0,
                };
                let dhk = if k == 3 {
                    o * (1.0 - o) * tc
                } else {
                    o * (1.0 - tc * tc) * dck
                };
                for j in 0..n {
                    a[(r, j)] += dhk * w[r * n + j];
                    a[(n + r, j)] += dck * w[r * n + j];
                }
            }
        }
        for r in 0..n {
            let tc = gt.tanh_c[r];
            a[(r, n + r)] = gt.o[r] * (1.0 - tc * tc) * gt.f[r];
            a[(n + r, n + r)] = gt.f[r];
        }
        a
    }

    fn clone_box(&self) -> Box<dyn DynamicalModel> {
        Box::new(self.clone())
    }
}
