use crate::model::{IndexedQueues, QueueView, SystemSpec, TailMeasure};

/// Time integrals of the number of servers at each exact queue length, kept
/// lazily: a bucket is brought up to date only when its count changes.
#[derive(Debug, Clone)]
pub(crate) struct Occupancy {
    acc: Vec<Vec<f64>>,
    last: Vec<Vec<f64>>,
}

impl Occupancy {
    pub fn new(num_pools: usize, now: f64) -> Self {
        Self { acc: vec![vec![0.0]; num_pools], last: vec![vec![now]; num_pools] }
    }

    fn ensure(&mut self, pool: usize, len: usize, now: f64) {
        if self.acc[pool].len() <= len {
            self.acc[pool].resize(len + 1, 0.0);
            self.last[pool].resize(len + 1, now);
        }
    }

    fn touch(&mut self, pool: usize, len: u32, count_before: usize, now: f64) {
        let len = len as usize;
        self.ensure(pool, len, now);
        self.acc[pool][len] += count_before as f64 * (now - self.last[pool][len]);
        self.last[pool][len] = now;
    }

    /// Call after a queue in `pool` went from `old` to `new` jobs at time `now`.
    pub fn on_change(&mut self, q: &IndexedQueues, pool: usize, old: u32, new: u32, now: f64) {
        self.touch(pool, old, q.count_at(pool, old) + 1, now);
        self.touch(pool, new, q.count_at(pool, new) - 1, now);
    }

    /// Brings every bucket up to `now`, returns the integrals and restarts them.
    pub fn take(&mut self, q: &IndexedQueues, now: f64) -> Vec<Vec<f64>> {
        for pool in 0..self.acc.len() {
            let top = q.max_len(pool) as usize;
            self.ensure(pool, top, now);
            for len in 0..self.acc[pool].len() {
                let c = q.count_at(pool, len as u32);
                self.acc[pool][len] += c as f64 * (now - self.last[pool][len]);
                self.last[pool][len] = now;
            }
        }
        let out = self.acc.clone();
        for a in &mut self.acc {
            a.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }
}

/// Converts integrals of exact-length counts into time-averaged tail fractions
/// `x[i][j]`, `i = 1..`, for each pool.
pub(crate) fn tail_fractions(integrals: &[Vec<f64>], spec: &SystemSpec, duration: f64) -> Vec<Vec<f64>> {
    integrals
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let norm = duration * spec.pool_size(j) as f64;
            let mut out = vec![0.0; col.len().saturating_sub(1)];
            let mut acc = 0.0;
            for len in (1..col.len()).rev() {
                acc += col[len];
                out[len - 1] = if norm > 0.0 { acc / norm } else { 0.0 };
            }
            out
        })
        .collect()
}

/// Running value of `sum_{i,j} |x[i][j] - ref[i][j]|` for the empirical
/// measure of a changing queue state.
#[derive(Debug, Clone)]
pub(crate) struct DistanceTracker {
    reference: TailMeasure,
    sizes: Vec<usize>,
    at_least: Vec<Vec<u64>>,
    value: f64,
}

impl DistanceTracker {
    pub fn new(reference: TailMeasure, q: &IndexedQueues, spec: &SystemSpec) -> Self {
        let sizes = spec.pool_sizes().to_vec();
        let mut at_least = vec![vec![0u64; 1]; sizes.len()];
        for (j, col) in at_least.iter_mut().enumerate() {
            let top = q.max_len(j) as usize;
            col.resize(top + 1, 0);
            for len in 1..=top {
                let c = q.count_at(j, len as u32) as u64;
                for slot in col.iter_mut().take(len + 1).skip(1) {
                    *slot += c;
                }
            }
        }
        let mut t = Self { reference, sizes, at_least, value: 0.0 };
        t.value = t.recompute();
        t
    }

    fn entry(&self, j: usize, i: usize) -> f64 {
        self.at_least[j].get(i).map_or(0.0, |&c| c as f64 / self.sizes[j] as f64)
    }

    fn recompute(&self) -> f64 {
        let mut d = 0.0;
        for j in 0..self.sizes.len() {
            let depth = self.reference.depth().max(self.at_least[j].len().saturating_sub(1));
            for i in 1..=depth {
                d += (self.entry(j, i) - self.reference.get(i, j)).abs();
            }
        }
        d
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Queue of `pool` went from `old` to `new = old +- 1`.
    pub fn on_change(&mut self, pool: usize, old: u32, new: u32) {
        let level = old.max(new) as usize;
        let before = self.entry(pool, level);
        if self.at_least[pool].len() <= level {
            self.at_least[pool].resize(level + 1, 0);
        }
        if new > old {
            self.at_least[pool][level] += 1;
        } else {
            self.at_least[pool][level] -= 1;
        }
        let after = self.entry(pool, level);
        let r = self.reference.get(level, pool);
        self.value += (after - r).abs() - (before - r).abs();
    }

    #[cfg(test)]
    pub fn exact(&self) -> f64 {
        self.recompute()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desim::SeparateSystem;
    use crate::model::{l1_distance, tail_measure_from_queues, QueueState};
    use crate::policy::PolicyId;

    #[test]
    fn incremental_distance_matches_direct_evaluation() {
        let spec = SystemSpec::two_speed_reference(10, 0.9).unwrap();
        let reference = TailMeasure::new(3, vec![vec![1.0, 0.5], vec![0.4]]).unwrap();
        let mut sys = SeparateSystem::new(&spec, &PolicyId::Jsq, &QueueState::uniform(&spec, 1), 3).unwrap();
        let mut tracker = DistanceTracker::new(reference.clone(), sys.queues(), &spec);
        for _ in 0..5000 {
            let s = sys.step();
            let (old, new) = s.transition.lengths();
            tracker.on_change(s.transition.pool(), old, new);
            let x = tail_measure_from_queues(sys.queues(), &spec, 64).unwrap();
            let (_, direct) = l1_distance(&x, &reference).unwrap();
            assert!((tracker.value() - direct).abs() < 1e-9);
            assert!((tracker.exact() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn occupancy_integrates_counts() {
        let spec = SystemSpec::two_speed_reference(10, 0.5).unwrap();
        let mut q = IndexedQueues::empty(&spec);
        let mut occ = Occupancy::new(2, 0.0);
        // pool 1 server 0 busy on [1, 3)
        q.increment(0, 0);
        occ.on_change(&q, 0, 0, 1, 1.0);
        q.decrement(0, 0);
        occ.on_change(&q, 0, 1, 0, 3.0);
        let acc = occ.take(&q, 4.0);
        assert_eq!(acc[0][1], 2.0);
        assert_eq!(acc[0][0], 2.0 * 4.0 - 2.0);
        assert_eq!(acc[1][0], 8.0 * 4.0);
        let x = tail_fractions(&acc, &spec, 4.0);
        assert_eq!(x[0], vec![2.0 / 8.0]);
    }
}
