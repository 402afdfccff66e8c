use serde::{Deserialize, Serialize};

use crate::error::{MnoError, Result};

/// Name, shape and kind of one parameter tensor. Complex blocks store
/// interleaved `(re, im)` pairs, so they hold twice `shape.product()` values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(default)]
    pub complex: bool,
}

impl BlockSpec {
    pub fn real(name: impl Into<String>, shape: Vec<usize>) -> Self {
        BlockSpec {
            name: name.into(),
            shape,
            complex: false,
        }
    }

    pub fn complex(name: impl Into<String>, shape: Vec<usize>) -> Self {
        BlockSpec {
            name: name.into(),
            shape,
            complex: true,
        }
    }

    /// Number of stored reals.
    pub fn len(&self) -> usize {
        self.shape.iter().product::<usize>() * if self.complex { 2 } else { 1 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered parameter blocks. The order of `specs` is the serialization order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub specs: Vec<BlockSpec>,
    pub blocks: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn zeros(specs: Vec<BlockSpec>) -> Self {
        let blocks = specs.iter().map(|s| vec![0.0; s.len()]).collect();
        ModelParams { specs, blocks }
    }

    pub fn from_flat(specs: Vec<BlockSpec>, flat: &[f64]) -> Result<Self> {
        let total: usize = specs.iter().map(BlockSpec::len).sum();
        if total != flat.len() {
            return Err(MnoError::Format(format!(
                "declared blocks hold {total} values, payload has {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(specs.len());
        for s in &specs {
            blocks.push(flat[offset..offset + s.len()].to_vec());
            offset += s.len();
        }
        Ok(ModelParams { specs, blocks })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn block(&self, name: &str) -> &[f64] {
        &self.blocks[self
            .index_of(name)
            .unwrap_or_else(|| panic!("no parameter block {name}"))]
    }

    pub fn block_mut(&mut self, name: &str) -> &mut [f64] {
        let i = self
            .index_of(name)
            .unwrap_or_else(|| panic!("no parameter block {name}"));
        &mut self.blocks[i]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|v| v.is_finite())
    }

    pub fn gradient_buffer(&self) -> GradientBuffer {
        GradientBuffer {
            blocks: self.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Accumulated `∂loss/∂θ`, block-congruent with its [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBuffer {
    pub blocks: Vec<Vec<f64>>,
}

impl GradientBuffer {
    pub fn zero(&mut self) {
        self.blocks.iter_mut().for_each(|b| b.fill(0.0));
    }

    pub fn scale(&mut self, s: f64) {
        self.blocks.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn add(&mut self, other: &GradientBuffer) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|v| v.is_finite())
    }

    pub fn congruent_with(&self, params: &ModelParams) -> bool {
        self.blocks.len() == params.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&params.blocks)
                .all(|(a, b)| a.len() == b.len())
    }
}
