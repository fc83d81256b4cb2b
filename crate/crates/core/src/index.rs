//! Multi-index arithmetic on the d-dimensional positive-integer lattice.
//!
//! Coordinates are 1-based on the API surface (the lattice starts at `(1,..,1)`);
//! flat storage offsets are 0-based with the last coordinate fastest.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Hard cap on the lattice dimension. Rectangle queries and the streaming scan
/// pay 2^d per cell for inclusion-exclusion, so large d is useless in practice.
pub const MAX_DIM: usize = 8;

/// A point of the positive-integer lattice, or the extents of a box anchored at 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex {
    coords: Vec<u64>,
}

impl MultiIndex {
    /// Builds an index, validating that every coordinate is >= 1 and d <= 8.
    pub fn new(coords: Vec<u64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidIndex("dimension must be >= 1".into()));
        }
        if coords.len() > MAX_DIM {
            return Err(Error::DimensionTooLarge(coords.len()));
        }
        if coords.contains(&0) {
            return Err(Error::InvalidIndex(format!(
                "coordinates must be >= 1, got {coords:?}"
            )));
        }
        Ok(Self { coords })
    }

    /// The diagonal index `(c, c, ..., c)` in dimension `d`.
    pub fn diagonal(c: u64, d: usize) -> Result<Self> {
        Self::new(vec![c; d])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    pub fn coord(&self, axis: usize) -> u64 {
        self.coords[axis]
    }

    /// `|n|`: the product of the coordinates (cell count of the box `[1, n]`).
    pub fn cells(&self) -> u64 {
        self.coords.iter().product()
    }

    /// Cell count with overflow detection, for shapes built from user input.
    pub fn checked_cells(&self) -> Result<u64> {
        self.coords
            .iter()
            .try_fold(1u64, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| Error::Overflow(format!("cell count of {self}")))
    }

    /// `||n||`: the sum of the coordinates.
    pub fn coord_sum(&self) -> u64 {
        self.coords.iter().sum()
    }

    /// Componentwise partial order `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self
                .coords
                .iter()
                .zip(other.coords.iter())
                .all(|(a, b)| a <= b)
    }

    /// Componentwise sum, e.g. `base + delta` for increment windows.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidIndex(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let coords = self
            .coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| a.checked_add(*b).ok_or_else(|| Error::Overflow("index sum".into())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coords)
    }

    /// Componentwise product of two indices, `(k_1 n_1, ..., k_d n_d)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidIndex(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let coords = self
            .coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| {
                a.checked_mul(*b)
                    .ok_or_else(|| Error::Overflow("index product".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(coords)
    }

    /// Flat storage offset of a 1-based index inside a box of this shape
    /// (lexicographic, last coordinate fastest).
    pub fn flat_offset_of(&self, idx: &[u64]) -> usize {
        debug_assert_eq!(idx.len(), self.dim());
        let mut off = 0usize;
        for (axis, &c) in idx.iter().enumerate() {
            debug_assert!(c >= 1 && c <= self.coords[axis]);
            off = off * self.coords[axis] as usize + (c - 1) as usize;
        }
        off
    }

    /// Iterates all 1-based indices of the box `[1, self]` in lexicographic
    /// order (last coordinate fastest), matching the flat storage layout.
    pub fn iter_box(&self) -> BoxIter {
        BoxIter {
            shape: self.coords.clone(),
            cur: vec![1; self.dim()],
            done: self.coords.contains(&0),
        }
    }

    /// Parses the CLI shape syntax `n1xn2x...xnd`.
    pub fn parse_shape(s: &str) -> Result<Self> {
        let coords = s
            .split('x')
            .map(|p| {
                p.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidIndex(format!("bad shape component {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(coords)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Lexicographic iterator over a box anchored at `(1,...,1)`.
pub struct BoxIter {
    shape: Vec<u64>,
    cur: Vec<u64>,
    done: bool,
}

impl Iterator for BoxIter {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        // odometer increment, last axis fastest
        let mut axis = self.shape.len();
        loop {
            if axis == 0 {
                self.done = true;
                break;
            }
            axis -= 1;
            if self.cur[axis] < self.shape[axis] {
                self.cur[axis] += 1;
                for a in axis + 1..self.shape.len() {
                    self.cur[a] = 1;
                }
                break;
            }
        }
        Some(out)
    }
}
