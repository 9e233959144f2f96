//! Speed-aware load balancing in heterogeneous server farms.

pub mod bounds;
pub mod coupling;
pub mod desim;
pub mod fluid;
pub mod model;
pub mod policy;
pub mod rng;
pub mod stats;

pub use model::{
    l1_distance, scaled_tail_sums, tail_measure_from_queues, validate_spec, IndexedQueues, ModelError, PoolSpec,
    QueueState, QueueView, SystemSpec, TailMeasure,
};
pub use policy::{DispatchDecision, PolicyError, PolicyId};
pub use bounds::{BoundsError, TailBound};
pub use coupling::{CouplingError, CouplingReport};
pub use desim::{RunMetrics, SimConfig, SimError};
pub use fluid::{ArrivalSplit, FluidError};
pub use stats::Estimate;
