//! Deterministic large-`N` limit of the SA-JSQ farm and of the pooled farm.
//!
//! The state is a [`TailMeasure`]. Arrivals are split by a cascade over
//! sporadically idle components: pools at the global minimum level offer the
//! servers that drop below it, faster pools one level above offer theirs, and
//! the first stable prefix of that list keeps its share. What is left goes to
//! the first component that cannot keep up, or, if every component is stable,
//! to the fastest pool at the minimum level.

mod ode;
mod oracle;
mod pooled;
mod split;

use std::io::Write;

use thiserror::Error;

pub use ode::{fixed_point, fluid_rhs, integrate_fluid, DEFAULT_DT, PROJECTION_LIMIT};
pub use oracle::{
    fast_chain_stationary_oracle, FastChainSummary, BOUNDARY_MASS_LIMIT, MAX_ORACLE_COMPONENTS, MIN_TRUNCATION,
};
pub use pooled::{integrate_pooled, pooled_fixed_point, pooled_service_rate};
pub use split::{
    compute_arrival_split, min_level, Absorber, ArrivalSplit, CascadeComponent, ComponentStatus, BOUNDARY_EPS,
};

use crate::model::{ModelError, TailMeasure};

#[derive(Debug, Error)]
pub enum FluidError {
    #[error("arrival mass reaches level {level} of pool {pool}, beyond truncation depth {depth}")]
    DepthExceeded { pool: usize, level: usize, depth: usize },
    #[error("projection moved x[{level}][{pool}] by {shift:.3e} at t = {time}; reduce dt")]
    StepTooLarge { time: f64, pool: usize, level: usize, shift: f64 },
    #[error("boundary mass {boundary_mass:.3e} at truncation {truncation} is too large")]
    TruncationTooSmall { truncation: usize, boundary_mass: f64 },
    #[error("Gauss-Seidel did not converge after {sweeps} sweeps")]
    NotConverged { sweeps: usize },
    #[error("invalid step or sampling interval {0}")]
    InvalidStep(f64),
    #[error("negative pooled occupancy {0}")]
    NegativeOccupancy(f64),
    #[error("invalid oracle input: {0}")]
    InvalidOracle(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `(level, pool, p, status)` rows, one per cascade component and one for the
/// absorber; one-based pool, queue-length level.
pub fn write_split_csv<W: Write>(split: &ArrivalSplit, out: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "pool", "p", "status"])?;
    for c in &split.cascade {
        w.write_record([
            c.level.to_string(),
            (c.pool + 1).to_string(),
            split.get(c.level, c.pool).to_string(),
            c.status.as_str().to_string(),
        ])?;
    }
    if let Some(a) = split.absorber {
        w.write_record([a.level.to_string(), (a.pool + 1).to_string(), split.get(a.level, a.pool).to_string(), "absorber".into()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `(j, x1)` rows of a fixed point.
pub fn write_fixed_point_csv<W: Write>(x: &TailMeasure, out: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["j", "x1"])?;
    for j in 0..x.num_pools() {
        w.write_record([(j + 1).to_string(), x.get(1, j).to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
