//! Compacted per-gene observations.
//!
//! A gene's cells are stored as `(value, multiplicity)` pairs so all the
//! per-gene work scales with the number of distinct counts, not with the
//! number of cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One gene's counts as sorted `(value, multiplicity)` pairs.
///
/// Zeros are stored explicitly as a `(0, k)` pair whenever `k > 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneCounts {
    gene_id: String,
    pairs: Vec<(u64, u64)>,
    n_cells: u64,
}

/// Shortcut classes for genes that need no numerical fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrivialClass {
    AllZero,
    ZeroOneOnly,
    General,
}

impl GeneCounts {
    /// Compacts a per-cell count vector. Cell order is irrelevant.
    pub fn from_values(gene_id: impl Into<String>, values: &[u64]) -> Self {
        let mut map = BTreeMap::new();
        for &v in values {
            *map.entry(v).or_insert(0u64) += 1;
        }
        Self::from_map(gene_id, map)
    }

    /// Builds from a value → multiplicity map; zero multiplicities are dropped.
    pub fn from_map(gene_id: impl Into<String>, map: BTreeMap<u64, u64>) -> Self {
        let pairs: Vec<(u64, u64)> = map.into_iter().filter(|&(_, k)| k > 0).collect();
        let n_cells = pairs.iter().map(|&(_, k)| k).sum();
        GeneCounts { gene_id: gene_id.into(), pairs, n_cells }
    }

    /// Builds from unsorted pairs, merging repeated values.
    pub fn from_pairs(gene_id: impl Into<String>, pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut map = BTreeMap::new();
        for (v, k) in pairs {
            *map.entry(v).or_insert(0u64) += k;
        }
        Self::from_map(gene_id, map)
    }

    pub fn gene_id(&self) -> &str {
        &self.gene_id
    }

    pub fn set_gene_id(&mut self, id: impl Into<String>) {
        self.gene_id = id.into();
    }

    pub fn pairs(&self) -> &[(u64, u64)] {
        &self.pairs
    }

    pub fn n_cells(&self) -> u64 {
        self.n_cells
    }

    pub fn n_unique(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_cells == 0
    }

    /// Number of cells with a zero count.
    pub fn zero_count(&self) -> u64 {
        match self.pairs.first() {
            Some(&(0, k)) => k,
            _ => 0,
        }
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.n_cells == 0 {
            return 0.0;
        }
        self.zero_count() as f64 / self.n_cells as f64
    }

    /// The pairs with a positive value.
    pub fn nonzero(&self) -> &[(u64, u64)] {
        match self.pairs.first() {
            Some(&(0, _)) => &self.pairs[1..],
            _ => &self.pairs,
        }
    }

    pub fn n_nonzero_cells(&self) -> u64 {
        self.n_cells - self.zero_count()
    }

    pub fn max_value(&self) -> u64 {
        self.pairs.last().map_or(0, |&(v, _)| v)
    }

    pub fn mean(&self) -> f64 {
        if self.n_cells == 0 {
            return 0.0;
        }
        let total: f64 = self.pairs.iter().map(|&(v, k)| v as f64 * k as f64).sum();
        total / self.n_cells as f64
    }

    /// Re-expands to one value per cell, in ascending order.
    pub fn expand(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.n_cells as usize);
        for &(v, k) in &self.pairs {
            out.extend(std::iter::repeat_n(v, k as usize));
        }
        out
    }

    pub fn classify_trivial(&self) -> TrivialClass {
        match self.max_value() {
            0 => TrivialClass::AllZero,
            1 => TrivialClass::ZeroOneOnly,
            _ => TrivialClass::General,
        }
    }
}

/// Free-function form of [`GeneCounts::classify_trivial`].
pub fn classify_trivial(counts: &GeneCounts) -> TrivialClass {
    counts.classify_trivial()
}
