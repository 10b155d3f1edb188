use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A named, row-major slice of a [`ParameterVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter vector with a layout of disjoint named blocks covering it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Vec<ParamBlock>,
}

/// Incremental layout construction; blocks are packed in insertion order.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    layout: Vec<ParamBlock>,
    len: usize,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn block(mut self, name: &str, rows: usize, cols: usize) -> Self {
        self.layout.push(ParamBlock {
            name: name.to_string(),
            offset: self.len,
            rows,
            cols,
        });
        self.len += rows * cols;
        self
    }

    pub fn zeros(self) -> ParameterVector {
        ParameterVector {
            values: vec![0.0; self.len],
            layout: self.layout,
        }
    }
}

impl ParameterVector {
    pub fn empty() -> Self {
        LayoutBuilder::new().zeros()
    }

    /// A single block named `theta` holding `values` as a column.
    pub fn flat(values: Vec<f64>) -> Self {
        let n = values.len();
        let mut p = LayoutBuilder::new().block("theta", n, 1).zeros();
        p.values = values;
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[ParamBlock] {
        &self.layout
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.values.len(),
                got: values.len(),
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<&ParamBlock> {
        self.layout.iter().find(|b| b.name == name)
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.find(name).is_some()
    }

    pub fn spec(&self, name: &str) -> Result<&ParamBlock> {
        self.find(name)
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))
    }

    pub fn block(&self, name: &str) -> Result<&[f64]> {
        let b = self.spec(name)?;
        Ok(&self.values[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let r = self.spec(name)?.range();
        Ok(&mut self.values[r])
    }

    pub fn set_block(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let b = self.spec(name)?.clone();
        if data.len() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter block",
                expected: b.len(),
                got: data.len(),
            });
        }
        self.values[b.range()].copy_from_slice(data);
        Ok(())
    }

    pub fn block_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let b = self.spec(name)?;
        Ok(DMatrix::from_row_slice(
            b.rows,
            b.cols,
            &self.values[b.range()],
        ))
    }

    pub fn set_block_matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<()> {
        let b = self.spec(name)?.clone();
        if m.nrows() != b.rows || m.ncols() != b.cols {
            return Err(Error::DimensionMismatch {
                what: "parameter block shape",
                expected: b.len(),
                got: m.len(),
            });
        }
        let dst = &mut self.values[b.range()];
        for r in 0..b.rows {
            for c in 0..b.cols {
                dst[r * b.cols + c] = m[(r, c)];
            }
        }
        Ok(())
    }

    /// Copy with every value multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.values.iter_mut().for_each(|v| *v *= s);
        p
    }

    /// SHA-256 over the layout and the exact bit patterns of the values.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for b in &self.layout {
            h.update(b.name.as_bytes());
            h.update((b.rows as u64).to_le_bytes());
            h.update((b.cols as u64).to_le_bytes());
        }
        for v in &self.values {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Layout sanity: blocks are disjoint, ordered, and cover the vector.
    pub fn check_layout(&self) -> bool {
        let mut next = 0;
        for b in &self.layout {
            if b.offset != next {
                return false;
            }
            next += b.len();
        }
        next == self.values.len()
    }
}
