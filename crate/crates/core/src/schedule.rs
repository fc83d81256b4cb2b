//! Index schedules and the clipped-logarithm normalizer.
//!
//! Everything here uses the clipped logarithm `L(x) = ln(max(x, e))`, so that
//! `L` and `L∘L` are 1 on small arguments and the normalizer
//! `(2 d |n| L(L(|n|)))^(1/2)` is well defined from `|n| = 1` on.

use crate::error::{Error, Result};
use crate::index::MultiIndex;
use serde::{Deserialize, Serialize};

/// `ln(x ∨ e)`: never below 1.
pub fn clipped_ln(x: f64) -> f64 {
    x.max(std::f64::consts::E).ln()
}

/// `L(L(x))` with the clipped logarithm at both levels.
pub fn clipped_loglog(x: f64) -> f64 {
    clipped_ln(clipped_ln(x))
}

/// The normalizer `sqrt(2 d |n| L(L(|n|)))` for a cell count `|n|`.
pub fn loglog_norm_cells(cells: u64, d: usize) -> f64 {
    let m = cells as f64;
    (2.0 * d as f64 * m * clipped_loglog(m)).sqrt()
}

/// The normalizer `sqrt(2 d |n| L(L(|n|)))` for an index `n`.
pub fn loglog_norm(n: &MultiIndex, d: usize) -> f64 {
    loglog_norm_cells(n.cells(), d)
}

/// One level of the blocking scheme: big blocks of length `m_k` separated by
/// gaps `p_k` inside super-blocks of length `n_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub k: u64,
    pub m_k: u64,
    pub p_k: u64,
    pub n_k: u64,
}

/// The full schedule `m_k = [2^(k^(1+eps))]`, `p_k = [k^-2 2^(k^(1+eps))]`,
/// `N_k = (m_k + p_k) k^4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub epsilon: f64,
    pub entries: Vec<BlockEntry>,
}

/// Largest float that still converts to u64 exactly enough for a floor.
const FLOOR_LIMIT: f64 = 9.0e18;

fn floor_u64(x: f64, what: &str) -> Result<u64> {
    if !x.is_finite() || x >= FLOOR_LIMIT {
        return Err(Error::Overflow(what.to_string()));
    }
    Ok(x.floor() as u64)
}

/// Evaluates the blocking schedule for `k = 1..=k_max`.
///
/// The defining quantity `2^(k^(1+eps))` is transcendental, so the floors are
/// taken of its `f64` evaluation; entries whose `N_k` would exceed the `u64`
/// range are rejected with an overflow error.
pub fn blocking_schedule(epsilon: f64, k_max: u64) -> Result<BlockSchedule> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if k_max < 1 {
        return Err(Error::InvalidParameter("k_max must be >= 1".into()));
    }
    let mut entries = Vec::with_capacity(k_max as usize);
    let mut prev_n = 0u64;
    for k in 1..=k_max {
        let kf = k as f64;
        let pow = 2f64.powf(kf.powf(1.0 + epsilon));
        let m_k = floor_u64(pow, "m_k")?;
        let p_k = floor_u64(pow / (kf * kf), "p_k")?;
        let k4 = k
            .checked_pow(4)
            .ok_or_else(|| Error::Overflow("k^4".into()))?;
        let n_k = m_k
            .checked_add(p_k)
            .and_then(|s| s.checked_mul(k4))
            .ok_or_else(|| Error::Overflow(format!("N_{k}")))?;
        if n_k <= prev_n {
            return Err(Error::InvalidParameter(format!(
                "schedule not strictly increasing at k={k}"
            )));
        }
        prev_n = n_k;
        entries.push(BlockEntry { k, m_k, p_k, n_k });
    }
    Ok(BlockSchedule { epsilon, entries })
}

/// Diagonal geometric subsequence `N_k = ([theta^k], ..., [theta^k])`,
/// `k = 1..=k_max`, with duplicate shapes removed.
pub fn geometric_subsequence(theta: f64, d: usize, k_max: u64) -> Result<Vec<MultiIndex>> {
    if !(theta > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must be > 1, got {theta}"
        )));
    }
    if d == 0 || d > crate::index::MAX_DIM {
        return Err(Error::InvalidIndex(format!("dimension {d}")));
    }
    let mut out: Vec<MultiIndex> = Vec::new();
    let mut last = 0u64;
    for k in 1..=k_max {
        let v = floor_u64(theta.powi(k as i32), "theta^k")?;
        if v >= 1 && v != last {
            out.push(MultiIndex::diagonal(v, d)?);
            last = v;
        }
    }
    Ok(out)
}
