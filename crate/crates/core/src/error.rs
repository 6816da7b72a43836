use thiserror::Error;

/// Errors raised by the network model, allocator and topology searches.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coincident positions: {what} {a} and {b} are at distance zero")]
    CoincidentPositions { what: &'static str, a: usize, b: usize },

    #[error("invalid network instance: {0}")]
    InvalidInstance(String),

    #[error("slot {index} has non-positive duration {value}")]
    NonPositiveSlot { index: usize, value: f64 },

    #[error("invalid slot allocation: {0}")]
    InvalidSlots(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exhaustive search refused: {n_d} nodes exceeds cap of {cap}")]
    ExhaustiveTooLarge { n_d: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
