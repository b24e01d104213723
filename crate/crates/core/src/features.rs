//! Feature vectors with a named block layout.
//!
//! Vectors are logically dense but stored as sorted non-zero entries: the TF
//! blocks are 10k wide and almost entirely zero, and the training set has
//! ~50k rows.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Ordered, contiguous block layout.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, len: usize) -> &Block {
        let offset = self.len();
        self.blocks.push(Block {
            name: name.into(),
            offset,
            len,
        });
        self.blocks.last().unwrap()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Rebuilds a layout from (name, len) pairs, e.g. when loading a model.
    pub fn from_blocks<I, S>(blocks: I) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut layout = Layout::new();
        for (name, len) in blocks {
            layout.push(name, len);
        }
        layout
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| format!("{}[{}]", b.name, b.len))
            .collect();
        f.write_str(&parts.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    layout: Arc<Layout>,
    /// Sorted by index, no explicit zeros.
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// `entries` must be sorted by index and lie inside the layout.
    pub fn from_sparse(layout: Arc<Layout>, entries: Vec<(u32, f64)>) -> Result<Self> {
        let n = layout.len();
        let mut prev: Option<u32> = None;
        for &(i, v) in &entries {
            if (i as usize) >= n || prev.is_some_and(|p| p >= i) {
                return Err(Error::Argument(format!(
                    "feature index {i} out of order or outside layout of length {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Argument(format!("non-finite feature value at {i}")));
            }
            prev = Some(i);
        }
        let entries = entries.into_iter().filter(|&(_, v)| v != 0.0).collect();
        Ok(Self { layout, entries })
    }

    pub fn from_dense(layout: Arc<Layout>, values: &[f64]) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Argument(format!(
                "dense vector of length {} does not match layout length {}",
                values.len(),
                layout.len()
            )));
        }
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        Self::from_sparse(layout, entries)
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nonzeros(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    /// Dense values of one named block.
    pub fn block_values(&self, name: &str) -> Option<Vec<f64>> {
        let b = self.layout.block(name)?;
        let mut out = vec![0.0; b.len];
        for &(i, v) in &self.entries {
            let i = i as usize;
            if i >= b.offset && i < b.offset + b.len {
                out[i - b.offset] = v;
            }
        }
        Some(out)
    }
}

/// Accumulates blocks left to right into one vector.
#[derive(Debug, Default)]
pub struct FeatureBuilder {
    layout: Layout,
    entries: Vec<(u32, f64)>,
}

impl FeatureBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dense_block(&mut self, name: &str, values: &[f64]) -> &mut Self {
        let offset = self.layout.len() as u32;
        self.layout.push(name, values.len());
        self.entries.extend(
            values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (offset + i as u32, *v)),
        );
        self
    }

    /// `entries` are block-relative and sorted.
    pub fn sparse_block(&mut self, name: &str, len: usize, entries: &[(u32, f64)]) -> &mut Self {
        let offset = self.layout.len() as u32;
        self.layout.push(name, len);
        self.entries
            .extend(entries.iter().filter(|(_, v)| *v != 0.0).map(|&(i, v)| (offset + i, v)));
        self
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn finish(self) -> Result<FeatureVector> {
        FeatureVector::from_sparse(Arc::new(self.layout), self.entries)
    }

    /// Finishes against an already-shared layout, which must equal the built one.
    pub fn finish_shared(self, layout: &Arc<Layout>) -> Result<FeatureVector> {
        if **layout != self.layout {
            return Err(Error::Argument(format!(
                "built layout {} differs from expected {}",
                self.layout, layout
            )));
        }
        FeatureVector::from_sparse(Arc::clone(layout), self.entries)
    }
}
