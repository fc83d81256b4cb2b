//! Realized sample fields and their file formats.
//!
//! A [`Field`] is a dense array of real values over the box `[1, shape]`,
//! stored lexicographically with the last coordinate fastest. The binary
//! format is `NAF1`: magic `b"NAF1"`, `u32` dimension, one `u64` per shape
//! coordinate, then the cells as `f64`, everything little-endian.

use crate::error::{Error, Result};
use crate::index::MultiIndex;
use std::io::{Read, Write};

const NAF_MAGIC: &[u8; 4] = b"NAF1";

/// A realized sample `{X_k : k <= shape}` with dense lexicographic layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: MultiIndex,
    values: Vec<f64>,
}

impl Field {
    /// Builds a field, checking the length and finiteness invariants.
    pub fn new(shape: MultiIndex, values: Vec<f64>) -> Result<Self> {
        let cells = shape.checked_cells()?;
        if values.len() as u64 != cells {
            return Err(Error::InvalidField(format!(
                "{} values for shape {shape} with {cells} cells",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite value".into()));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: MultiIndex) -> Result<Self> {
        let cells = shape.checked_cells()? as usize;
        Ok(Self {
            shape,
            values: vec![0.0; cells],
        })
    }

    /// Builds a 2-dimensional field from rows (first coordinate indexes rows).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidField("empty rows".into()));
        }
        let ncols = rows[0].len();
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidField("ragged rows".into()));
        }
        let shape = MultiIndex::new(vec![rows.len() as u64, ncols as u64])?;
        Field::new(shape, rows.iter().flatten().copied().collect())
    }

    pub fn shape(&self) -> &MultiIndex {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value at a 1-based multi-index.
    pub fn at(&self, idx: &[u64]) -> f64 {
        self.values[self.shape.flat_offset_of(idx)]
    }

    /// Applies a cellwise map, preserving the shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.shape.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Writes the `NAF1` binary format.
    pub fn write_naf<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(NAF_MAGIC)?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        for &c in self.shape.coords() {
            w.write_all(&c.to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the `NAF1` binary format.
    pub fn read_naf<R: Read>(r: &mut R) -> Result<Field> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != NAF_MAGIC {
            return Err(Error::Format("bad magic, expected NAF1".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        if d == 0 || d > crate::index::MAX_DIM {
            return Err(Error::Format(format!("bad dimension {d}")));
        }
        let mut coords = Vec::with_capacity(d);
        let mut b8 = [0u8; 8];
        for _ in 0..d {
            r.read_exact(&mut b8)?;
            coords.push(u64::from_le_bytes(b8));
        }
        let shape = MultiIndex::new(coords)?;
        let cells = shape.checked_cells()? as usize;
        let mut values = Vec::with_capacity(cells);
        for _ in 0..cells {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Field::new(shape, values)
    }

    /// Writes the debugging CSV: one line per cell, `k_1,...,k_d,value`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        for idx in self.shape.iter_box() {
            let v = self.values[self.shape.flat_offset_of(&idx)];
            let coords: Vec<String> = idx.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{}", coords.join(","), v)?;
        }
        Ok(())
    }

    /// Transposes two axes (used by the permutation-covariance property tests).
    pub fn transpose(&self, a: usize, b: usize) -> Result<Field> {
        let d = self.dim();
        if a >= d || b >= d {
            return Err(Error::OutOfRange(format!("axes {a},{b} for dimension {d}")));
        }
        let mut new_coords = self.shape.coords().to_vec();
        new_coords.swap(a, b);
        let new_shape = MultiIndex::new(new_coords)?;
        let mut values = vec![0.0; self.values.len()];
        for idx in self.shape.iter_box() {
            let mut t = idx.clone();
            t.swap(a, b);
            values[new_shape.flat_offset_of(&t)] = self.values[self.shape.flat_offset_of(&idx)];
        }
        Field::new(new_shape, values)
    }
}
