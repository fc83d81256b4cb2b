//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or index violates the lattice invariants (coordinates >= 1, d >= 1).
    #[error("invalid shape or index: {0}")]
    InvalidIndex(String),

    /// Dimension exceeds the supported cap (inclusion-exclusion cost is 2^d).
    #[error("dimension {0} exceeds the supported maximum of {max}", max = crate::index::MAX_DIM)]
    DimensionTooLarge(usize),

    /// An index lies outside the field it addresses.
    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// A numeric parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Integer schedule entry exceeds the platform integer range.
    #[error("integer overflow in {0}")]
    Overflow(String),

    /// The requested operation does not support this generator.
    #[error("unsupported generator: {0}")]
    UnsupportedSpec(String),

    /// A field failed validation (length mismatch or non-finite values).
    #[error("invalid field: {0}")]
    InvalidField(String),

    /// Size cap exceeded (brute-force oracles and exact enumerations).
    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),

    /// Malformed file contents (binary field files, configs).
    #[error("format error: {0}")]
    Format(String),
}
