use super::{ModelError, QueueState, QueueView, SystemSpec};

const NOT_BUSY: u32 = u32::MAX;

/// Queue lengths with per-pool length buckets and busy lists, so that the
/// minimum of a pool, the servers at a given length and a uniformly chosen busy
/// server are all available in constant time.
#[derive(Debug, Clone)]
pub struct IndexedQueues {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    lengths: Vec<u32>,
    // buckets[j][len] holds the local indices of pool-j servers with `len` jobs.
    buckets: Vec<Vec<Vec<u32>>>,
    bucket_slot: Vec<u32>,
    busy: Vec<Vec<u32>>,
    busy_slot: Vec<u32>,
    mins: Vec<u32>,
    total: u64,
}

impl IndexedQueues {
    pub fn new(spec: &SystemSpec, state: &QueueState) -> Result<Self, ModelError> {
        let state = QueueState::new(spec, state.pools().to_vec())?;
        let sizes = spec.pool_sizes().to_vec();
        let offsets: Vec<usize> = (0..sizes.len()).map(|j| spec.pool_offset(j)).collect();
        let n = spec.n_servers();
        let mut out = Self {
            buckets: vec![Vec::new(); sizes.len()],
            busy: vec![Vec::new(); sizes.len()],
            mins: vec![0; sizes.len()],
            lengths: vec![0; n],
            bucket_slot: vec![0; n],
            busy_slot: vec![NOT_BUSY; n],
            total: 0,
            sizes,
            offsets,
        };
        for (j, pool) in state.pools().iter().enumerate() {
            for (k, &len) in pool.iter().enumerate() {
                let g = out.offsets[j] + k;
                out.lengths[g] = len;
                out.total += u64::from(len);
                out.insert_bucket(j, k, len);
                if len > 0 {
                    out.busy_slot[g] = out.busy[j].len() as u32;
                    out.busy[j].push(k as u32);
                }
            }
            out.mins[j] = pool.iter().copied().min().unwrap_or(0);
        }
        Ok(out)
    }

    pub fn empty(spec: &SystemSpec) -> Self {
        Self::new(spec, &QueueState::empty(spec)).expect("empty state matches its own spec")
    }

    fn insert_bucket(&mut self, pool: usize, server: usize, len: u32) {
        let buckets = &mut self.buckets[pool];
        let len = len as usize;
        if buckets.len() <= len {
            buckets.resize_with(len + 1, Vec::new);
        }
        self.bucket_slot[self.offsets[pool] + server] = buckets[len].len() as u32;
        buckets[len].push(server as u32);
    }

    fn remove_bucket(&mut self, pool: usize, server: usize, len: u32) {
        let slot = self.bucket_slot[self.offsets[pool] + server] as usize;
        let bucket = &mut self.buckets[pool][len as usize];
        bucket.swap_remove(slot);
        if let Some(&moved) = bucket.get(slot) {
            self.bucket_slot[self.offsets[pool] + moved as usize] = slot as u32;
        }
    }

    /// Adds one job to server `(pool, server)`.
    pub fn increment(&mut self, pool: usize, server: usize) {
        let g = self.offsets[pool] + server;
        let len = self.lengths[g];
        self.remove_bucket(pool, server, len);
        self.insert_bucket(pool, server, len + 1);
        self.lengths[g] = len + 1;
        if len == 0 {
            self.busy_slot[g] = self.busy[pool].len() as u32;
            self.busy[pool].push(server as u32);
        }
        if self.mins[pool] == len && self.buckets[pool][len as usize].is_empty() {
            self.mins[pool] = len + 1;
        }
        self.total += 1;
    }

    /// Removes one job from server `(pool, server)`, which must be busy.
    pub fn decrement(&mut self, pool: usize, server: usize) {
        let g = self.offsets[pool] + server;
        let len = self.lengths[g];
        assert!(len > 0, "departure from idle server ({pool}, {server})");
        self.remove_bucket(pool, server, len);
        self.insert_bucket(pool, server, len - 1);
        self.lengths[g] = len - 1;
        if len == 1 {
            let slot = self.busy_slot[g] as usize;
            let list = &mut self.busy[pool];
            list.swap_remove(slot);
            if let Some(&moved) = list.get(slot) {
                self.busy_slot[self.offsets[pool] + moved as usize] = slot as u32;
            }
            self.busy_slot[g] = NOT_BUSY;
        }
        if len - 1 < self.mins[pool] {
            self.mins[pool] = len - 1;
        }
        self.total -= 1;
    }

    /// The `n`-th busy server of `pool`, `n < busy_count(pool)`.
    pub fn nth_busy(&self, pool: usize, n: usize) -> usize {
        self.busy[pool][n] as usize
    }

    /// Total service rate `sum_j speed_j * busy_j`.
    pub fn departure_rate(&self, speeds: &[f64]) -> f64 {
        self.busy.iter().zip(speeds).map(|(b, s)| b.len() as f64 * s).sum()
    }

    /// Highest queue-length bucket ever allocated in `pool`.
    pub fn max_len(&self, pool: usize) -> u32 {
        self.buckets[pool].iter().rposition(|b| !b.is_empty()).unwrap_or(0) as u32
    }

    pub fn global_index(&self, pool: usize, server: usize) -> usize {
        self.offsets[pool] + server
    }

    pub fn to_state(&self) -> QueueState {
        QueueState::from_view(self)
    }
}

impl QueueView for IndexedQueues {
    fn num_pools(&self) -> usize {
        self.sizes.len()
    }

    fn pool_size(&self, pool: usize) -> usize {
        self.sizes[pool]
    }

    fn queue(&self, pool: usize, server: usize) -> u32 {
        self.lengths[self.offsets[pool] + server]
    }

    fn pool_min(&self, pool: usize) -> u32 {
        self.mins[pool]
    }

    fn count_at(&self, pool: usize, len: u32) -> usize {
        self.buckets[pool].get(len as usize).map_or(0, Vec::len)
    }

    fn nth_at(&self, pool: usize, len: u32, n: usize) -> usize {
        self.buckets[pool][len as usize][n] as usize
    }

    fn busy_count(&self, pool: usize) -> usize {
        self.busy[pool].len()
    }

    fn total_jobs(&self) -> u64 {
        self.total
    }
}
