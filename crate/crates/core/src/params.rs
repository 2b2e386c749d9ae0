//! Flat parameter vectors with a named block decomposition.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{EmError, Result};

/// A named, contiguous slice of a [`ParamVec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub range: Range<usize>,
    /// One short name per coordinate in the block (e.g. `mu`, `var`).
    pub coords: Vec<String>,
}

/// Block structure shared by every parameter vector of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    blocks: Vec<Block>,
    dim: usize,
}

impl BlockLayout {
    /// Builds a layout from `(block name, coordinate names)` pairs laid out back to back.
    pub fn new<S: Into<String>>(spec: Vec<(S, Vec<String>)>) -> Result<Self> {
        let mut blocks = Vec::with_capacity(spec.len());
        let mut start = 0;
        for (name, coords) in spec {
            let name = name.into();
            if coords.is_empty() {
                return Err(EmError::Config(format!("block `{name}` is empty")));
            }
            let end = start + coords.len();
            blocks.push(Block { name, range: start..end, coords });
            start = end;
        }
        if blocks.is_empty() {
            return Err(EmError::Config("layout has no blocks".into()));
        }
        Ok(Self { blocks, dim: start })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block-qualified coordinate names, e.g. `comp1.mu`.
    pub fn qualified_names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.coords.iter().map(move |c| format!("{}.{}", b.name, c))).collect()
    }

    fn validate(&self) -> Result<()> {
        let mut next = 0;
        for b in &self.blocks {
            if b.range.start != next || b.range.end <= b.range.start {
                return Err(EmError::Config(format!("block `{}` is not contiguous", b.name)));
            }
            next = b.range.end;
        }
        if next != self.dim {
            return Err(EmError::Config("blocks do not cover the parameter vector".into()));
        }
        Ok(())
    }
}

/// Real parameter vector `θ = (t_1, …, t_s)` together with its block layout.
#[derive(Clone, PartialEq)]
pub struct ParamVec {
    values: Vec<f64>,
    layout: Arc<BlockLayout>,
}

impl ParamVec {
    pub fn new(values: Vec<f64>, layout: Arc<BlockLayout>) -> Result<Self> {
        layout.validate()?;
        if values.len() != layout.dim() {
            return Err(EmError::InvalidParam(format!("expected {} values, got {}", layout.dim(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmError::NonFinite(format!("coordinate {} = {}", layout.qualified_names()[i], values[i])));
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, index: usize) -> &[f64] {
        &self.values[self.layout.blocks[index].range.clone()]
    }

    /// Returns a copy with `values` replaced; the layout is kept.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, Arc::clone(&self.layout))
    }

    /// Copies the coordinates of `block` from `source` into a copy of `self`.
    pub fn with_block_from(&self, source: &ParamVec, block: usize) -> ParamVec {
        let mut values = self.values.clone();
        let r = self.layout.blocks[block].range.clone();
        values[r.clone()].copy_from_slice(&source.values[r]);
        ParamVec { values, layout: Arc::clone(&self.layout) }
    }

    /// Sup-norm distance `‖self − other‖_∞`.
    pub fn sup_dist(&self, other: &ParamVec) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Unchecked constructor for internal arithmetic whose finiteness is checked later.
    pub(crate) fn from_raw(values: Vec<f64>, layout: Arc<BlockLayout>) -> Self {
        debug_assert_eq!(values.len(), layout.dim());
        Self { values, layout }
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for ParamVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (name, v) in self.layout.qualified_names().iter().zip(&self.values) {
            m.entry(name, v);
        }
        m.finish()
    }
}
