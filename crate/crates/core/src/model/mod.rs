//! Farm description, per-server queue states and tail measures.

mod indexed;
pub mod io;
mod spec;
mod state;
mod tail;

use thiserror::Error;

pub use indexed::IndexedQueues;
pub use spec::{validate_spec, PoolSpec, SystemSpec, SPEC_TOLERANCE};
pub use state::{QueueState, QueueView};
pub use tail::{l1_distance, scaled_tail_sums, tail_measure_from_queues, TailMeasure, DEFAULT_DEPTH};

/// Pool numbers in error messages are one-based.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("a system needs at least one pool")]
    NoPools,
    #[error("a system needs at least one server")]
    NoServers,
    #[error("pool {pool}: speed {speed} is not a positive finite number")]
    InvalidSpeed { pool: usize, speed: f64 },
    #[error("pool {pool}: fraction {fraction} is outside (0, 1]")]
    InvalidFraction { pool: usize, fraction: f64 },
    #[error("pool {pool} is not strictly slower than pool {}", pool - 1)]
    UnsortedSpeeds { pool: usize },
    #[error("pool fractions sum to {sum}, expected 1")]
    FractionsNotNormalized { sum: f64 },
    #[error("total capacity sum(speed * fraction) is {capacity}, expected 1")]
    UnnormalizedCapacity { capacity: f64 },
    #[error("pool {pool}: N * fraction = {size} is not a positive integer")]
    NonIntegerPoolSize { pool: usize, size: f64 },
    #[error("normalised arrival rate {lambda} is outside (0, 1)")]
    LambdaOutOfRange { lambda: f64 },
    #[error("pool count mismatch: {left} vs {right}")]
    PoolCountMismatch { left: usize, right: usize },
    #[error("pool {pool}: expected {expected} servers, found {found}")]
    PoolSizeMismatch { pool: usize, expected: usize, found: usize },
    #[error("pool {pool}: level {level} exceeds truncation depth {depth}")]
    DepthExceeded { pool: usize, level: u64, depth: usize },
    #[error("truncation depth must be positive")]
    ZeroDepth,
    #[error("pool {pool}, level {level}: value {value} breaks 1 >= x[i] >= x[i+1] >= 0")]
    NotATailMeasure { pool: usize, level: usize, value: f64 },
    #[error("malformed record: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QueueState {
    /// Empirical tail measure of this state.
    pub fn tail_measure(&self, spec: &SystemSpec, depth: usize) -> Result<TailMeasure, ModelError> {
        tail_measure_from_queues(self, spec, depth)
    }
}
