//! Fixtures shared by the benchmarks under `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hetlb::{QueueState, SystemSpec, TailMeasure};

pub fn reference(n: usize, lambda: f64) -> SystemSpec {
    SystemSpec::two_speed_reference(n, lambda).expect("reference farm is valid")
}

/// Queue lengths drawn uniformly from `0..=max`.
pub fn random_state(spec: &SystemSpec, max: u32, seed: u64) -> QueueState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queues = spec.pool_sizes().iter().map(|&k| (0..k).map(|_| rng.random_range(0..=max)).collect()).collect();
    QueueState::new(spec, queues).expect("sizes match the farm")
}

/// A non-increasing tail measure with geometric decay per pool.
pub fn decaying_tail(pools: usize, depth: usize, ratio: f64) -> TailMeasure {
    TailMeasure::from_fn(pools, depth, |i, j| ratio.powi((i + j) as i32 - 1).min(1.0)).expect("values are monotone")
}
