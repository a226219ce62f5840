use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a block is reached through a select plan or sent to every client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockRole {
    Selectable,
    Broadcast,
}

/// Layout entry of one named block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: String,
    /// Row-major shape.
    pub shape: Vec<usize>,
    pub role: BlockRole,
    pub offset: usize,
    pub len: usize,
}

impl BlockSpec {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    /// Size of the leading axis (1 for scalars).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Scalars per leading-axis row.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }
}

/// A server model `x` in `R^s`, stored flat and partitioned into named
/// row-major blocks laid out back to back in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedParams {
    blocks: Vec<BlockSpec>,
    values: Vec<f64>,
}

impl Default for BlockedParams {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockedParams {
    pub fn new() -> Self {
        BlockedParams {
            blocks: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a block. `values` must hold exactly `shape.product()` scalars.
    pub fn push_block(&mut self, name: &str, shape: &[usize], role: BlockRole, values: Vec<f64>) -> Result<()> {
        if self.blocks.iter().any(|b| b.name == name) {
            return Err(Error::DuplicateBlock(name.to_string()));
        }
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "block `{name}` with shape {shape:?} needs {len} scalars, got {}",
                values.len()
            )));
        }
        self.blocks.push(BlockSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
            role,
            offset: self.values.len(),
            len,
        });
        self.values.extend(values);
        Ok(())
    }

    pub fn with_block(mut self, name: &str, shape: &[usize], role: BlockRole, values: Vec<f64>) -> Result<Self> {
        self.push_block(name, shape, role, values)?;
        Ok(self)
    }

    pub fn with_zeros(self, name: &str, shape: &[usize], role: BlockRole) -> Result<Self> {
        let len = shape.iter().product();
        self.with_block(name, shape, role, vec![0.0; len])
    }

    /// Total scalar count `s`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Result<&BlockSpec> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))
    }

    pub fn block_values(&self, name: &str) -> Result<&[f64]> {
        let spec = self.block(name)?;
        Ok(&self.values[spec.range()])
    }

    pub fn block_values_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let range = self.block(name)?.range();
        Ok(&mut self.values[range])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same layout, new contents.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "layout holds {} scalars, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(BlockedParams {
            blocks: self.blocks.clone(),
            values,
        })
    }

    pub fn zeros_like(&self) -> Self {
        BlockedParams {
            blocks: self.blocks.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    /// Names of every block carrying `role`, in layout order.
    pub fn names_with_role(&self, role: BlockRole) -> Vec<String> {
        self.blocks
            .iter()
            .filter(|b| b.role == role)
            .map(|b| b.name.clone())
            .collect()
    }

    pub fn same_layout(&self, other: &BlockedParams) -> bool {
        self.blocks == other.blocks
    }
}
