use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{fill_uniform, matvec_acc, random_orthogonal, Readout};
use crate::error::Result;
use crate::statespace::{DynamicalModel, Jacobians, LayoutBuilder, ParameterVector};

/// `h' = tanh(W h + U z + b)`.
#[derive(Debug, Clone)]
pub struct VanillaRnnCell {
    hidden: usize,
    input_dim: usize,
    readout: Readout,
    params: ParameterVector,
}

impl VanillaRnnCell {
    pub fn zeros(hidden: usize, input_dim: usize, readout: Readout) -> Self {
        let mut b = LayoutBuilder::new().block("W", hidden, hidden);
        if input_dim > 0 {
            b = b.block("U", hidden, input_dim);
        }
        b = b.block("b", hidden, 1);
        let params = readout.add_blocks(b, hidden).zeros();
        Self {
            hidden,
            input_dim,
            readout,
            params,
        }
    }

    /// `W = w·I`, everything else zero.
    pub fn scaled_identity(hidden: usize, input_dim: usize, w: f64, readout: Readout) -> Self {
        let mut cell = Self::zeros(hidden, input_dim, readout);
        cell.params
            .set_block_matrix("W", &(DMatrix::identity(hidden, hidden) * w))
            .unwrap();
        cell
    }

    pub fn random<R: Rng + ?Sized>(
        hidden: usize,
        input_dim: usize,
        readout: Readout,
        rng: &mut R,
    ) -> Self {
        let mut cell = Self::zeros(hidden, input_dim, readout);
        let bound = 1.0 / (hidden as f64).sqrt();
        cell.params
            .set_block_matrix("W", &random_orthogonal(hidden, rng))
            .unwrap();
        if input_dim > 0 {
            fill_uniform(cell.params.block_mut("U").unwrap(), bound, rng);
        }
        if let Readout::Linear(_) = readout {
            fill_uniform(cell.params.block_mut("W_y").unwrap(), bound, rng);
        }
        cell
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    fn activations(&self, h: &[f64], z: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let mut pre = p.block("b").unwrap().to_vec();
        let mut acc = vec![0.0; self.hidden];
        matvec_acc(&mut acc, p.block("W").unwrap(), h);
        if self.input_dim > 0 {
            matvec_acc(&mut acc, p.block("U").unwrap(), z);
        }
        for (v, a) in pre.iter_mut().zip(acc) {
            *v = (*v + a).tanh();
        }
        pre
    }
}

impl DynamicalModel for VanillaRnnCell {
    fn name(&self) -> &str {
        "vanilla"
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
        self.params.set_values(values)
    }

    fn step(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.activations(x.as_slice(), z.as_slice()))
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
        let act = self.activations(h, zs);
        let d: Vec<f64> = act.iter().map(|v| 1.0 - v * v).collect();
        let w = p.block("W").unwrap();
        let a = DMatrix::from_fn(n, n, |r, j| d[r] * w[r * n + j]);
        let mut b = DMatrix::zeros(n, p.len());
        let wo = p.spec("W").unwrap().offset;
        let bo = p.spec("b").unwrap().offset;
        for r in 0..n {
            for j in 0..n {
                b[(r, wo + r * n + j)] = d[r] * h[j];
            }
            b[(r, bo + r)] = d[r];
        }
        if nz > 0 {
            let uo = p.spec("U").unwrap().offset;
            for r in 0..n {
                for j in 0..nz {
                    b[(r, uo + r * nz + j)] = d[r] * zs[j];
                }
            }
        }
        let (c, f) = self.readout.jacobians(p, h, n);
        Jacobians { a, b, c, f }
    }

    fn clone_box(&self) -> Box<dyn DynamicalModel> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_jacobians_match_fd, random_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scaled_identity_jacobian_at_origin() {
        let cell = VanillaRnnCell::scaled_identity(3, 0, 0.8, Readout::Identity);
        let a = cell.jacobians(&DVector::zeros(3), &DVector::zeros(0)).a;
        assert_eq!(a, DMatrix::identity(3, 3) * 0.8);
    }

    #[test]
    fn outputs_are_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cell = VanillaRnnCell::random(4, 2, Readout::Identity, &mut rng);
        let theta = random_state(cell.n_params(), 5.0, &mut rng);
        cell.set_param_values(theta.as_slice()).unwrap();
        for _ in 0..20 {
            let x = random_state(4, 10.0, &mut rng);
            let z = random_state(2, 10.0, &mut rng);
            assert!(cell.step(&x, &z).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (nz, readout) in [(2, Readout::Linear(2)), (0, Readout::Identity)] {
            for _ in 0..20 {
                let mut cell = VanillaRnnCell::random(4, nz, readout, &mut rng);
                let theta = random_state(cell.n_params(), 1.0, &mut rng);
                cell.set_param_values(theta.as_slice()).unwrap();
                let x = random_state(4, 1.0, &mut rng);
                let z = random_state(nz, 1.0, &mut rng);
                assert_jacobians_match_fd(&cell, &x, &z, 1e-5);
            }
        }
    }
}
