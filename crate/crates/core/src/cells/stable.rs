use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LstmCell, LSTM_RECURRENT};
use crate::error::{Error, Result};
use crate::statespace::{DynamicalModel, Jacobians, ParameterVector};

pub const DEFAULT_TARGET_NORM: f64 = 0.97;

/// Blocks are rescaled only when `σ₁` exceeds the target by more than this
/// relative slack, so a second projection is a no-op.
const PROJECTION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub target_norm: f64,
    pub which_blocks: Vec<String>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            target_norm: DEFAULT_TARGET_NORM,
            which_blocks: LSTM_RECURRENT.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_norm > 0.0 && self.target_norm < 1.0) {
            return Err(Error::invalid("target_norm must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Rescale `w` to spectral norm `target` if it is larger. Returns whether it changed.
pub fn project_block(w: &mut DMatrix<f64>, target: f64) -> bool {
    let sigma = crate::linalg::spectral_norm(w);
    if sigma > target * (1.0 + PROJECTION_SLACK) {
        *w *= target / sigma;
        true
    } else {
        false
    }
}

/// LSTM whose listed recurrent blocks are kept at spectral norm ≤ `target_norm`
/// by [`StableLstmCell::project`], called after every parameter update.
#[derive(Debug, Clone)]
pub struct StableLstmCell {
    lstm: LstmCell,
    config: ProjectionConfig,
}

impl StableLstmCell {
    /// Wraps `lstm` and projects it once.
    pub fn new(lstm: LstmCell, config: ProjectionConfig) -> Result<Self> {
        config.validate()?;
        for name in &config.which_blocks {
            let spec = lstm.params().spec(name)?;
            if spec.rows != spec.cols {
                return Err(Error::invalid(format!("block {name} is not square")));
            }
        }
        let mut cell = Self { lstm, config };
        cell.project();
        Ok(cell)
    }

    pub fn lstm(&self) -> &LstmCell {
        &self.lstm
    }

    pub fn config(&self) -> &ProjectionConfig {
        &self.config
    }

    /// Project every listed block; returns the names of the blocks that changed.
    pub fn project(&mut self) -> Vec<String> {
        let mut changed = Vec::new();
        for name in &self.config.which_blocks {
            let p = self.lstm.params_mut();
            let mut w = p.block_matrix(name).expect("validated block");
            if project_block(&mut w, self.config.target_norm) {
                p.set_block_matrix(name, &w).expect("same shape");
                changed.push(name.clone());
            }
        }
        changed
    }

    /// Spectral norm of each listed block.
    pub fn block_norms(&self) -> Vec<(String, f64)> {
        self.config
            .which_blocks
            .iter()
            .map(|name| {
                let w = self.lstm.params().block_matrix(name).unwrap();
                (name.clone(), crate::linalg::spectral_norm(&w))
            })
            .collect()
    }
}

impl DynamicalModel for StableLstmCell {
    fn name(&self) -> &str {
        "slstm"
    }
    fn state_dim(&self) -> usize {
        self.lstm.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.lstm.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.lstm.output_dim()
    }
    fn params(&self) -> &ParameterVector {
        self.lstm.params()
    }
    /// Sets θ verbatim; projection happens only through [`StableLstmCell::project`].
    fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        self.lstm.set_param_values(values)
    }
    fn step(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.lstm.step(x, z)
    }
    fn output(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.lstm.output(x, z)
    }
    fn jacobians(&self, x: &DVector<f64>, z: &DVector<f64>) -> Jacobians {
        self.lstm.jacobians(x, z)
    }
    fn state_jacobian(&self, x: &DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
        self.lstm.state_jacobian(x, z)
    }
    fn clone_box(&self) -> Box<dyn DynamicalModel> {
        Box::new(self.clone())
    }
}
