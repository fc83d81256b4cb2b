//! Simulation and statistical verification of negatively associated (NA)
//! random fields on the d-dimensional positive-integer lattice.
//!
//! The crate has three layers:
//!
//! * a streaming lattice engine ([`index`], [`field`], [`scan`], [`schedule`])
//!   that computes rectangle partial sums `S_n`, anchored sums `T_k`, and the
//!   maximum `M_n = max_{k<=n} |T_k|` in one pass with a planar buffer;
//! * NA field generators with analytically known covariance ([`generators`]),
//!   brute-force oracles ([`oracles`]), and Monte Carlo machinery ([`stats`]);
//! * inequality verifiers ([`inequalities`]) and a law-of-the-iterated-logarithm
//!   trajectory harness ([`lil`]) that report statistically qualified verdicts.
//!
//! Everything is deterministic given a master seed: replications and cells are
//! keyed by counters, never by draw order, so thread count and evaluation order
//! cannot change any output.

// Validation guards are written `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod generators;
pub mod index;
pub mod inequalities;
pub mod lil;
pub mod oracles;
pub mod report;
pub mod rng;
pub mod scan;
pub mod schedule;
pub mod stats;

pub mod cli;

pub use error::{Error, Result};
pub use field::Field;
pub use generators::{GeneratorKind, GeneratorSpec};
pub use index::MultiIndex;
pub use report::{InequalityReport, Verdict};
pub use scan::{PartialSumSummary, PrefixTable};
pub use stats::McEstimate;
