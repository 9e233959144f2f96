use serde::{Deserialize, Serialize};

use super::{ModelError, SystemSpec};

/// Read access to per-server queue lengths, organised by pool.
///
/// The provided methods scan the state; [`IndexedQueues`](super::IndexedQueues)
/// overrides them with constant-time lookups so that the dispatch policies and
/// drift evaluators run at simulator speed.
pub trait QueueView {
    fn num_pools(&self) -> usize;

    fn pool_size(&self, pool: usize) -> usize;

    /// Jobs at server `server` of `pool`, including the one in service.
    fn queue(&self, pool: usize, server: usize) -> u32;

    /// Smallest queue length in `pool`.
    fn pool_min(&self, pool: usize) -> u32 {
        (0..self.pool_size(pool)).map(|k| self.queue(pool, k)).min().unwrap_or(u32::MAX)
    }

    /// Number of servers in `pool` holding exactly `len` jobs.
    fn count_at(&self, pool: usize, len: u32) -> usize {
        (0..self.pool_size(pool)).filter(|&k| self.queue(pool, k) == len).count()
    }

    /// The `n`-th server (in some fixed order) of `pool` holding exactly `len` jobs.
    fn nth_at(&self, pool: usize, len: u32, n: usize) -> usize {
        (0..self.pool_size(pool))
            .filter(|&k| self.queue(pool, k) == len)
            .nth(n)
            .expect("nth_at index out of range")
    }

    /// Busy servers in `pool`.
    fn busy_count(&self, pool: usize) -> usize {
        (0..self.pool_size(pool)).filter(|&k| self.queue(pool, k) > 0).count()
    }

    fn idle_count(&self, pool: usize) -> usize {
        self.pool_size(pool) - self.busy_count(pool)
    }

    /// Global minimum queue length.
    fn global_min(&self) -> u32 {
        (0..self.num_pools()).map(|j| self.pool_min(j)).min().unwrap_or(0)
    }

    /// The fastest pool containing a server with the global minimum queue length.
    fn fastest_min_pool(&self) -> usize {
        let m = self.global_min();
        (0..self.num_pools()).find(|&j| self.pool_min(j) == m).unwrap_or(0)
    }

    fn total_jobs(&self) -> u64 {
        (0..self.num_pools())
            .map(|j| (0..self.pool_size(j)).map(|k| u64::from(self.queue(j, k))).sum::<u64>())
            .sum()
    }
}

/// Per-server queue lengths `Q[j][k]`, pool-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueueState {
    queues: Vec<Vec<u32>>,
}

impl QueueState {
    pub fn new(spec: &SystemSpec, queues: Vec<Vec<u32>>) -> Result<Self, ModelError> {
        if queues.len() != spec.num_pools() {
            return Err(ModelError::PoolCountMismatch { left: queues.len(), right: spec.num_pools() });
        }
        for (j, q) in queues.iter().enumerate() {
            if q.len() != spec.pool_size(j) {
                return Err(ModelError::PoolSizeMismatch { pool: j + 1, expected: spec.pool_size(j), found: q.len() });
            }
        }
        Ok(Self { queues })
    }

    pub fn empty(spec: &SystemSpec) -> Self {
        Self::uniform(spec, 0)
    }

    /// Every server holds `level` jobs.
    pub fn uniform(spec: &SystemSpec, level: u32) -> Self {
        Self { queues: spec.pool_sizes().iter().map(|&n| vec![level; n]).collect() }
    }

    /// Every server of pool `j` holds `levels[j]` jobs.
    pub fn per_pool(spec: &SystemSpec, levels: &[u32]) -> Result<Self, ModelError> {
        if levels.len() != spec.num_pools() {
            return Err(ModelError::PoolCountMismatch { left: levels.len(), right: spec.num_pools() });
        }
        Ok(Self { queues: spec.pool_sizes().iter().zip(levels).map(|(&n, &l)| vec![l; n]).collect() })
    }

    /// Snapshot of any view.
    pub fn from_view<V: QueueView + ?Sized>(view: &V) -> Self {
        Self {
            queues: (0..view.num_pools())
                .map(|j| (0..view.pool_size(j)).map(|k| view.queue(j, k)).collect())
                .collect(),
        }
    }

    pub fn pools(&self) -> &[Vec<u32>] {
        &self.queues
    }

    pub fn pool(&self, j: usize) -> &[u32] {
        &self.queues[j]
    }

    pub fn into_inner(self) -> Vec<Vec<u32>> {
        self.queues
    }

    pub fn max_queue(&self) -> u32 {
        self.queues.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Servers of `pool` at the pool's minimum queue length.
    pub fn min_servers(&self, pool: usize) -> Vec<usize> {
        let m = self.pool_min(pool);
        (0..self.queues[pool].len()).filter(|&k| self.queues[pool][k] == m).collect()
    }

    /// Component-wise `self <= other`.
    pub fn dominated_by(&self, other: &QueueState) -> bool {
        self.queues.len() == other.queues.len()
            && self
                .queues
                .iter()
                .zip(&other.queues)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x <= y))
    }
}

impl QueueView for QueueState {
    fn num_pools(&self) -> usize {
        self.queues.len()
    }

    fn pool_size(&self, pool: usize) -> usize {
        self.queues[pool].len()
    }

    fn queue(&self, pool: usize, server: usize) -> u32 {
        self.queues[pool][server]
    }
}
