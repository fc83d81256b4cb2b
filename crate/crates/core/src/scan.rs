//! Streaming computation of anchored partial sums over lattice boxes.
//!
//! For a field `{X_i : i <= n}` the anchored sums are `T_k = sum_{i <= k} X_i`;
//! the scan produces every `T_k` in one lexicographic pass. Cells are consumed
//! with the last coordinate fastest; along that fastest axis a running
//! Neumaier-compensated row sum `R(k) = sum_{j <= k_d} X[k_1..k_{d-1}, j]` is
//! maintained, and the remaining axes are folded in by inclusion-exclusion
//! over the 2^(d-1)-1 lower neighbors:
//!
//! `T[k] = R(k) + sum_{S != {}} (-1)^(|S|+1) T[k - e_S]`, `S ⊆ {axes 1..d-1}`.
//!
//! Every neighbor lives either in the current or the previous slab of the
//! slowest axis, so one (d-1)-dimensional plane pair is the whole working set:
//! memory is O(|n| / n_1) and the pass is single-threaded by construction
//! (each cell depends on its predecessors). Dimension is capped at
//! [`crate::index::MAX_DIM`] by `MultiIndex`, which also rejects empty shapes.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::index::MultiIndex;
use serde::Serialize;

/// Exact summary of one scan: `S_n`, `M_n`, the signed maximum, and `max T_k^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialSumSummary {
    /// `S_n`, the sum over the full box.
    pub total: f64,
    /// `M_n = max_{k <= n} |T_k|`.
    pub max_abs: f64,
    /// `max_{k <= n} T_k` (not clipped at zero).
    pub max_signed: f64,
    /// `max_{k <= n} T_k^2`, which equals `max_abs^2`.
    pub second_moment_proxy: f64,
}

/// Receives every anchored sum produced by a scan, in lexicographic order.
pub trait ScanVisitor {
    fn visit(&mut self, coords: &[u64], t: f64);
}

/// Accumulates the [`PartialSumSummary`] quantities.
#[derive(Debug, Clone)]
pub struct SummaryVisitor {
    last: f64,
    max_abs: f64,
    max_signed: f64,
}

impl SummaryVisitor {
    pub fn new() -> Self {
        Self {
            last: 0.0,
            max_abs: 0.0,
            max_signed: f64::NEG_INFINITY,
        }
    }

    pub fn finish(self) -> PartialSumSummary {
        PartialSumSummary {
            total: self.last,
            max_abs: self.max_abs,
            max_signed: self.max_signed,
            second_moment_proxy: self.max_abs * self.max_abs,
        }
    }
}

impl Default for SummaryVisitor {
    fn default() -> Self {
        Self::new()
    }
}

impl ScanVisitor for SummaryVisitor {
    fn visit(&mut self, _coords: &[u64], t: f64) {
        self.last = t;
        self.max_abs = self.max_abs.max(t.abs());
        self.max_signed = self.max_signed.max(t);
    }
}

/// One inclusion-exclusion term over the non-fastest axes.
struct Term {
    sign: f64,
    uses_prev: bool,
    plane_shift: usize,
    /// Axes (field numbering) that must be > 1 for the neighbor to exist.
    guard_axes: Vec<usize>,
}

/// Runs the streaming scan, pulling cell values from `source` in lexicographic
/// order and reporting every `T_k` to `visitor`. `source` receives the 1-based
/// coordinates of the cell it must produce.
pub fn streaming_scan<F, V>(shape: &MultiIndex, mut source: F, visitor: &mut V)
where
    F: FnMut(&[u64]) -> f64,
    V: ScanVisitor,
{
    let d = shape.dim();
    let dims = shape.coords();
    let fastest = d - 1;

    // Plane over axes 1..d (everything but the slowest); len 1 when d == 1.
    let mut plane_strides = vec![0usize; d];
    let plane_len: usize = dims[1..].iter().map(|&c| c as usize).product::<usize>().max(1);
    if d >= 2 {
        let mut stride = 1usize;
        for axis in (1..d).rev() {
            plane_strides[axis] = stride;
            stride *= dims[axis] as usize;
        }
    }

    // Inclusion-exclusion terms: nonempty subsets of axes {0..d-2}.
    let ie_axes = fastest; // number of axes participating
    let mut terms: Vec<Term> = Vec::new();
    for mask in 1u32..(1u32 << ie_axes) {
        let mut uses_prev = false;
        let mut plane_shift = 0usize;
        let mut guard_axes = Vec::new();
        for axis in 0..ie_axes {
            if mask & (1 << axis) != 0 {
                guard_axes.push(axis);
                if axis == 0 {
                    uses_prev = true;
                } else {
                    plane_shift += plane_strides[axis];
                }
            }
        }
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        terms.push(Term {
            sign,
            uses_prev,
            plane_shift,
            guard_axes,
        });
    }

    let mut prev_plane = vec![0.0f64; plane_len];
    let mut cur_plane = vec![0.0f64; plane_len];

    let mut coords = vec![1u64; d];
    let mut plane_off = 0usize;
    // Neumaier-compensated row sum along the fastest axis.
    let mut row_sum = 0.0f64;
    let mut row_comp = 0.0f64;

    loop {
        if coords[fastest] == 1 {
            row_sum = 0.0;
            row_comp = 0.0;
        }
        let x = source(&coords);
        let t_new = row_sum + x;
        if row_sum.abs() >= x.abs() {
            row_comp += (row_sum - t_new) + x;
        } else {
            row_comp += (x - t_new) + row_sum;
        }
        row_sum = t_new;

        let mut t = row_sum + row_comp;
        for term in &terms {
            if term.guard_axes.iter().any(|&a| coords[a] == 1) {
                continue;
            }
            let neighbor = if term.uses_prev {
                prev_plane[plane_off - term.plane_shift]
            } else {
                cur_plane[plane_off - term.plane_shift]
            };
            t += term.sign * neighbor;
        }
        cur_plane[plane_off] = t;
        visitor.visit(&coords, t);

        // odometer step, last axis fastest
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if coords[axis] < dims[axis] {
                coords[axis] += 1;
                if axis >= 1 {
                    plane_off += plane_strides[axis];
                    for a in axis + 1..d {
                        plane_off -= plane_strides[a] * (coords[a] - 1) as usize;
                        coords[a] = 1;
                    }
                } else {
                    // new slab of the slowest axis
                    std::mem::swap(&mut prev_plane, &mut cur_plane);
                    plane_off = 0;
                    for a in 1..d {
                        coords[a] = 1;
                    }
                }
                break;
            }
        }
    }
}

/// Single-pass exact computation of `S_n`, `M_n`, `max T_k` and `max T_k^2`.
pub fn partial_sums_scan(field: &Field) -> PartialSumSummary {
    let shape = field.shape();
    let values = field.values();
    let mut flat = 0usize;
    let mut visitor = SummaryVisitor::new();
    streaming_scan(
        shape,
        |_coords| {
            let v = values[flat];
            flat += 1;
            v
        },
        &mut visitor,
    );
    visitor.finish()
}

/// Retained table of every anchored sum `T_k`, for rectangle queries.
#[derive(Debug, Clone)]
pub struct PrefixTable {
    shape: MultiIndex,
    sums: Vec<f64>,
}

struct StoreVisitor<'a> {
    out: &'a mut Vec<f64>,
}

impl ScanVisitor for StoreVisitor<'_> {
    fn visit(&mut self, _coords: &[u64], t: f64) {
        self.out.push(t);
    }
}

impl PrefixTable {
    pub fn new(field: &Field) -> Self {
        let shape = field.shape().clone();
        let values = field.values();
        let mut sums = Vec::with_capacity(values.len());
        let mut flat = 0usize;
        let mut visitor = StoreVisitor { out: &mut sums };
        streaming_scan(
            &shape,
            |_coords| {
                let v = values[flat];
                flat += 1;
                v
            },
            &mut visitor,
        );
        Self { shape, sums }
    }

    pub fn shape(&self) -> &MultiIndex {
        &self.shape
    }

    /// `T_k` for a 1-based index `k <= shape`.
    pub fn anchored(&self, k: &MultiIndex) -> Result<f64> {
        if !k.le(&self.shape) {
            return Err(Error::OutOfRange(format!("{k} beyond shape {}", self.shape)));
        }
        Ok(self.sums[self.shape.flat_offset_of(k.coords())])
    }

    fn anchored_unchecked(&self, coords: &[u64]) -> f64 {
        if coords.contains(&0) {
            return 0.0;
        }
        self.sums[self.shape.flat_offset_of(coords)]
    }

    /// Exact sum of `X` over the box `lo <= k <= hi` by 2^d inclusion-exclusion.
    pub fn rectangle_sum(&self, lo: &MultiIndex, hi: &MultiIndex) -> Result<f64> {
        let d = self.shape.dim();
        if lo.dim() != d || hi.dim() != d {
            return Err(Error::InvalidIndex("rectangle dimension mismatch".into()));
        }
        if !lo.le(hi) || !hi.le(&self.shape) {
            return Err(Error::OutOfRange(format!(
                "rectangle [{lo}, {hi}] in shape {}",
                self.shape
            )));
        }
        let mut corner = vec![0u64; d];
        let mut acc = 0.0;
        for mask in 0u32..(1u32 << d) {
            for axis in 0..d {
                corner[axis] = if mask & (1 << axis) != 0 {
                    lo.coord(axis) - 1
                } else {
                    hi.coord(axis)
                };
            }
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * self.anchored_unchecked(&corner);
        }
        Ok(acc)
    }

    /// `max_{1 <= j <= delta} |S_{base+j} - S_base|`: the anchored-difference
    /// maximum over the window hanging off `base`.
    pub fn increment_max(&self, base: &MultiIndex, delta: &MultiIndex) -> Result<f64> {
        let top = base.add(delta)?;
        if !top.le(&self.shape) {
            return Err(Error::OutOfRange(format!(
                "window {base}+{delta} beyond shape {}",
                self.shape
            )));
        }
        let s_base = self.anchored(base)?;
        let mut best = 0.0f64;
        let d = self.shape.dim();
        let mut idx = vec![0u64; d];
        for offset in delta.iter_box() {
            for a in 0..d {
                idx[a] = base.coord(a) + offset[a];
            }
            let diff = (self.anchored_unchecked(&idx) - s_base).abs();
            best = best.max(diff);
        }
        Ok(best)
    }
}

/// One-shot rectangle sum; builds a table internally.
pub fn rectangle_sum(field: &Field, lo: &MultiIndex, hi: &MultiIndex) -> Result<f64> {
    PrefixTable::new(field).rectangle_sum(lo, hi)
}

/// One-shot increment maximum; builds a table internally.
pub fn increment_max(field: &Field, base: &MultiIndex, delta: &MultiIndex) -> Result<f64> {
    PrefixTable::new(field).increment_max(base, delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_2x2() -> Field {
        Field::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]).unwrap()
    }

    #[test]
    fn scan_2x2_anchored_values() {
        // T values in lexicographic order: 1, -1, 4, 6
        let f = sample_2x2();
        let table = PrefixTable::new(&f);
        assert_eq!(table.sums, vec![1.0, -1.0, 4.0, 6.0]);
        let s = partial_sums_scan(&f);
        assert_eq!(s.total, 6.0);
        assert_eq!(s.max_abs, 6.0);
        assert_eq!(s.max_signed, 6.0);
        assert_eq!(s.second_moment_proxy, 36.0);
    }

    #[test]
    fn scan_zero_field() {
        let f = Field::zeros(MultiIndex::new(vec![3, 2, 4]).unwrap()).unwrap();
        let s = partial_sums_scan(&f);
        assert_eq!(s.total, 0.0);
        assert_eq!(s.max_abs, 0.0);
    }

    #[test]
    fn scan_single_negative_cell() {
        let f = Field::new(MultiIndex::new(vec![1]).unwrap(), vec![-5.0]).unwrap();
        let s = partial_sums_scan(&f);
        assert_eq!(s.total, -5.0);
        assert_eq!(s.max_abs, 5.0);
        assert_eq!(s.max_signed, -5.0);
    }

    #[test]
    fn rectangle_sum_examples() {
        let f = sample_2x2();
        let t = PrefixTable::new(&f);
        let lo = MultiIndex::new(vec![2, 1]).unwrap();
        let hi = MultiIndex::new(vec![2, 2]).unwrap();
        assert_eq!(t.rectangle_sum(&lo, &hi).unwrap(), 7.0);
        let one = MultiIndex::new(vec![1, 1]).unwrap();
        assert_eq!(t.rectangle_sum(&one, &one).unwrap(), 1.0);
        let full = MultiIndex::new(vec![2, 2]).unwrap();
        assert_eq!(
            t.rectangle_sum(&one, &full).unwrap(),
            partial_sums_scan(&f).total
        );
    }

    #[test]
    fn rectangle_sum_out_of_range() {
        let f = sample_2x2();
        let t = PrefixTable::new(&f);
        let lo = MultiIndex::new(vec![1, 1]).unwrap();
        let hi = MultiIndex::new(vec![3, 2]).unwrap();
        assert!(t.rectangle_sum(&lo, &hi).is_err());
        assert!(t.rectangle_sum(&hi, &lo).is_err());
    }

    #[test]
    fn increment_max_example() {
        // base=(1,1), delta=(1,1): only offset is (1,1): |S_{2,2} - S_{1,1}| = |6-1| = 5
        let f = sample_2x2();
        let base = MultiIndex::new(vec![1, 1]).unwrap();
        let delta = MultiIndex::new(vec![1, 1]).unwrap();
        assert_eq!(increment_max(&f, &base, &delta).unwrap(), 5.0);
    }

    #[test]
    fn increment_max_zero_field() {
        let f = Field::zeros(MultiIndex::new(vec![4, 4]).unwrap()).unwrap();
        let base = MultiIndex::new(vec![2, 2]).unwrap();
        let delta = MultiIndex::new(vec![2, 2]).unwrap();
        assert_eq!(increment_max(&f, &base, &delta).unwrap(), 0.0);
    }

    #[test]
    fn increment_max_out_of_range() {
        let f = sample_2x2();
        let base = MultiIndex::new(vec![2, 2]).unwrap();
        let delta = MultiIndex::new(vec![1, 1]).unwrap();
        assert!(increment_max(&f, &base, &delta).is_err());
    }

    #[test]
    fn scan_3d_matches_direct_summation() {
        // deterministic pseudo-random integers, checked against direct sums
        let shape = MultiIndex::new(vec![3, 4, 5]).unwrap();
        let values: Vec<f64> = (0..60).map(|i| ((i * 37 + 11) % 19) as f64 - 9.0).collect();
        let f = Field::new(shape.clone(), values).unwrap();
        let table = PrefixTable::new(&f);
        for k in shape.iter_box() {
            let direct: f64 = shape
                .iter_box()
                .filter(|i| i.iter().zip(k.iter()).all(|(a, b)| a <= b))
                .map(|i| f.at(&i))
                .sum();
            let got = table.anchored_unchecked(&k);
            assert!((direct - got).abs() < 1e-12, "mismatch at {k:?}");
        }
    }
}
