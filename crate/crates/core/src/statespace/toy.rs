//! Small reference systems with closed-form behaviour, used as sanity
//! families for every analysis.

use nalgebra::{DMatrix, DVector};

use super::{DynamicalModel, Jacobians, LayoutBuilder, ParameterVector};
use crate::error::Result;

/// Which matrix of a [`LinearSystem`] is exposed as θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearParams {
    /// θ is empty.
    Fixed,
    /// θ = A, row-major.
    StateMatrix,
    /// θ = B, row-major.
    InputMatrix,
}

/// `x' = A x + B z`, `y = C x`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    which: LinearParams,
    params: ParameterVector,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Self {
        Self::with_params(a, b, c, LinearParams::Fixed)
    }

    pub fn with_params(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        which: LinearParams,
    ) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        assert_eq!(b.nrows(), a.nrows());
        assert_eq!(c.ncols(), a.nrows());
        let mut params = match which {
            LinearParams::Fixed => ParameterVector::empty(),
            LinearParams::StateMatrix => LayoutBuilder::new()
                .block("A", a.nrows(), a.ncols())
                .zeros(),
            LinearParams::InputMatrix => LayoutBuilder::new()
                .block("B", b.nrows(), b.ncols())
                .zeros(),
        };
        match which {
            LinearParams::Fixed => {}
            LinearParams::StateMatrix => params.set_block_matrix("A", &a).unwrap(),
            LinearParams::InputMatrix => params.set_block_matrix("B", &b).unwrap(),
        }
        Self {
            a,
            b,
            c,
            which,
            params,
        }
    }

    /// `x' = a·x`, `y = x`, no input, θ empty.
    pub fn scalar(a: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::zeros(1, 0),
            DMatrix::identity(1, 1),
        )
    }

    /// `x' = θ·x`, `y = x`, no input, θ = [θ].
    pub fn scalar_parametric(theta: f64) -> Self {
        Self::with_params(
            DMatrix::from_element(1, 1, theta),
            DMatrix::zeros(1, 0),
            DMatrix::identity(1, 1),
            LinearParams::StateMatrix,
        )
    }

    /// `x' = a·x + θ·u`, `y = x`, θ = [θ]: the state Lipschitz constant is exactly `|a|`.
    pub fn scalar_input_gain(a: f64, theta: f64) -> Self {
        Self::with_params(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, theta),
            DMatrix::identity(1, 1),
            LinearParams::InputMatrix,
        )
    }

    /// Planar rotation by `phi` (an isometry).
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new(
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            DMatrix::zeros(2, 0),
            DMatrix::identity(2, 2),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl DynamicalModel for LinearSystem {
    fn name(&self) -> &str {
        "linear"
    }
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn output_dim(&self) -> usize {
        self.c.nrows()
    }
    fn params(&self) -> &ParameterVector {
        &self.params
    }
    fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        self.params.set_values(values)?;
        match self.which {
            LinearParams::Fixed => {}
            LinearParams::StateMatrix => self.a = self.params.block_matrix("A")?,
            LinearParams::InputMatrix => self.b = self.params.block_matrix("B")?,
        }
        Ok(())
    }
    fn step(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        if z.is_empty() {
            &self.a * x
        } else {
            &self.a * x + &self.b * z
        }
    }
    fn output(&self, x: &DVector<f64>, _z: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }
    fn jacobians(&self, x: &DVector<f64>, z: &DVector<f64>) -> Jacobians {
        let n = self.state_dim();
        let np = self.params.len();
        let mut b = DMatrix::zeros(n, np);
        match self.which {
            LinearParams::Fixed => {}
            // x'_r = Σ_j A[r,j] x_j
            LinearParams::StateMatrix => {
                for r in 0..n {
                    for j in 0..n {
                        b[(r, r * n + j)] = x[j];
                    }
                }
            }
            LinearParams::InputMatrix => {
                let m = self.input_dim();
                for r in 0..n {
                    for j in 0..m {
                        b[(r, r * m + j)] = z[j];
                    }
                }
            }
        }
        Jacobians {
            a: self.a.clone(),
            b,
            c: self.c.clone(),
            f: DMatrix::zeros(self.output_dim(), np),
        }
    }
    fn state_jacobian(&self, _x: &DVector<f64>, _z: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
    fn clone_box(&self) -> Box<dyn DynamicalModel> {
        Box::new(self.clone())
    }
}

/// `x' = tanh(W x)`, `y = x`, θ = W.
#[derive(Debug, Clone)]
pub struct TanhMap {
    w: DMatrix<f64>,
    params: ParameterVector,
}

impl TanhMap {
    pub fn new(w: DMatrix<f64>) -> Self {
        let mut params = LayoutBuilder::new().block("W", w.nrows(), w.ncols()).zeros();
        params.set_block_matrix("W", &w).unwrap();
        Self { w, params }
    }

    pub fn scalar(w: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, w))
    }
}

impl DynamicalModel for TanhMap {
    fn name(&self) -> &str {
        "tanh-map"
    }
    fn state_dim(&self) -> usize {
        self.w.nrows()
    }
    fn input_dim(&self) -> usize {
        0
    }
    fn output_dim(&self) -> usize {
        self.w.nrows()
    }
    fn params(&self) -> &ParameterVector {
        &self.params
    }
    fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        self.params.set_values(values)?;
        self.w = self.params.block_matrix("W")?;
        Ok(())
    }
    fn step(&self, x: &DVector<f64>, _z: &DVector<f64>) -> DVector<f64> {
        (&self.w * x).map(f64::tanh)
    }
    fn output(&self, x: &DVector<f64>, _z: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn jacobians(&self, x: &DVector<f64>, _z: &DVector<f64>) -> Jacobians {
        let n = self.state_dim();
        let d = (&self.w * x).map(|p| 1.0 - p.tanh().powi(2));
        let mut a = self.w.clone();
        let mut b = DMatrix::zeros(n, n * n);
        for r in 0..n {
            a.row_mut(r).scale_mut(d[r]);
            for j in 0..n {
                b[(r, r * n + j)] = d[r] * x[j];
            }
        }
        Jacobians {
            a,
            b,
            c: DMatrix::identity(n, n),
            f: DMatrix::zeros(n, n * n),
        }
    }
    fn clone_box(&self) -> Box<dyn DynamicalModel> {
        Box::new(self.clone())
    }
}

/// Logistic map `x' = r·x·(1 − x)`, θ = [r].
#[derive(Debug, Clone)]
pub struct LogisticMap {
    params: ParameterVector,
}

impl LogisticMap {
    pub fn new(r: f64) -> Self {
        Self {
            params: ParameterVector::flat(vec![r]),
        }
    }

    fn r(&self) -> f64 {
        self.params.values()[0]
    }
}

impl DynamicalModel for LogisticMap {
    fn name(&self) -> &str {
        "logistic"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        0
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn params(&self) -> &ParameterVector {
        &self.params
    }
    fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        self.params.set_values(values)
    }
    fn step(&self, x: &DVector<f64>, _z: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.r() * v * (1.0 - v))
    }
    fn output(&self, x: &DVector<f64>, _z: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn jacobians(&self, x: &DVector<f64>, _z: &DVector<f64>) -> Jacobians {
        let v = x[0];
        Jacobians {
            a: DMatrix::from_element(1, 1, self.r() * (1.0 - 2.0 * v)),
            b: DMatrix::from_element(1, 1, v * (1.0 - v)),
            c: DMatrix::identity(1, 1),
            f: DMatrix::zeros(1, 1),
        }
    }
    fn clone_box(&self) -> Box<dyn DynamicalModel> {
        Box::new(self.clone())
    }
}
