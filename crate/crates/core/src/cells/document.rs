use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Activation, Cell, LstmCell, OrthogonalRnnCell, ProjectionConfig, Readout, StableLstmCell,
    VanillaRnnCell,
};
use crate::error::{Error, Result};
use crate::statespace::{DynamicalModel, ParameterVector};

pub const FORMAT_VERSION: u32 = 1;

/// Column vectors serialize flat, matrices as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockValue {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

/// JSON form of a cell: its shape, options and every parameter block by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDocument {
    pub format_version: u32,
    pub kind: String,
    pub hidden: usize,
    #[serde(default)]
    pub input_dim: usize,
    #[serde(default)]
    pub biases: bool,
    #[serde(default = "default_readout")]
    pub readout: Readout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionConfig>,
    pub blocks: BTreeMap<String, BlockValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    /// Free-form annotations (provenance, sweep settings); ignored when building the cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, serde_json::Value>>,
}

fn default_readout() -> Readout {
    Readout::Identity
}

fn to_block_value(p: &ParameterVector, name: &str) -> BlockValue {
    let spec = p.spec(name).unwrap();
    let data = p.block(name).unwrap();
    if spec.cols == 1 {
        BlockValue::Vector(data.to_vec())
    } else {
        BlockValue::Matrix(data.chunks(spec.cols).map(|r| r.to_vec()).collect())
    }
}

impl CellDocument {
    pub fn from_cell(cell: &Cell, initial_state: Option<Vec<f64>>) -> Self {
        let p = cell.params();
        let blocks = p
            .layout()
            .iter()
            .map(|b| (b.name.clone(), to_block_value(p, &b.name)))
            .collect();
        let (biases, readout, activation, projection) = match cell {
            Cell::Lstm(c) => (c.has_biases(), c.readout(), None, None),
            Cell::StableLstm(c) => (
                c.lstm().has_biases(),
                c.lstm().readout(),
                None,
                Some(c.config().clone()),
            ),
            Cell::Orthogonal(c) => (c.has_bias(), c.readout(), Some(c.activation()), None),
            Cell::Vanilla(c) => (true, c.readout(), None, None),
        };
        Self {
            format_version: FORMAT_VERSION,
            kind: cell.kind().to_string(),
            hidden: cell.hidden(),
            input_dim: cell.input_dim(),
            biases,
            readout,
            activation,
            projection,
            blocks,
            initial_state,
            metadata: None,
        }
    }

    /// Build the cell, checking every block's presence and shape.
    pub fn into_cell(self) -> Result<Cell> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported cell format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Format("hidden size must be positive".into()));
        }
        let mut cell = match self.kind.as_str() {
            "lstm" | "slstm" => {
                Cell::Lstm(LstmCell::zeros(self.hidden, self.input_dim, self.biases, self.readout))
            }
            "ornn" => Cell::Orthogonal(OrthogonalRnnCell::zeros(
                self.hidden,
                self.input_dim,
                self.biases,
                self.activation.unwrap_or_default(),
                self.readout,
            )),
            "vanilla" => {
                Cell::Vanilla(VanillaRnnCell::zeros(self.hidden, self.input_dim, self.readout))
            }
            other => return Err(Error::Format(format!("unknown cell kind `{other}`"))),
        };
        let mut values = cell.params().clone();
        for name in self.blocks.keys() {
            if !values.has_block(name) {
                return Err(Error::UnknownBlock(name.clone()));
            }
        }
        for spec in cell.params().layout() {
            let v = self
                .blocks
                .get(&spec.name)
                .ok_or_else(|| Error::Format(format!("missing block `{}`", spec.name)))?;
            let flat: Vec<f64> = match v {
                BlockValue::Vector(d) if spec.cols == 1 => d.clone(),
                BlockValue::Matrix(rows)
                    if rows.len() == spec.rows && rows.iter().all(|r| r.len() == spec.cols) =>
                {
                    rows.concat()
                }
                _ => {
                    return Err(Error::Format(format!(
                        "block `{}` must be {}×{}",
                        spec.name, spec.rows, spec.cols
                    )))
                }
            };
            values.set_block(&spec.name, &flat)?;
        }
        cell.set_param_values(values.values())?;
        if let Some(x0) = &self.initial_state {
            if x0.len() != cell.state_dim() {
                return Err(Error::DimensionMismatch {
                    what: "initial state",
                    expected: cell.state_dim(),
                    got: x0.len(),
                });
            }
        }
        if self.kind == "slstm" {
            let lstm = match cell {
                Cell::Lstm(c) => c,
                _ => unreachable!(),
            };
            cell = Cell::StableLstm(StableLstmCell::new(
                lstm,
                self.projection.clone().unwrap_or_default(),
            )?);
        }
        Ok(cell)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cell documents always serialize")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
