use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::model::{IndexedQueues, ModelError, QueueState, QueueView, SystemSpec};
use crate::policy::{dispatch, jffs_select, PolicyError, PolicyId};
use crate::rng::{exp1, stream_rng, DISPATCH_STREAM, EVENT_STREAM};

/// What happened at one event of the separate-queue system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transition {
    Arrival { pool: usize, server: usize, new_len: u32 },
    /// `arrived_at` is `-inf` for jobs present at time zero.
    Departure { pool: usize, server: usize, new_len: u32, arrived_at: f64 },
}

impl Transition {
    pub fn pool(&self) -> usize {
        match *self {
            Transition::Arrival { pool, .. } | Transition::Departure { pool, .. } => pool,
        }
    }

    pub fn server(&self) -> usize {
        match *self {
            Transition::Arrival { server, .. } | Transition::Departure { server, .. } => server,
        }
    }

    /// `(length before, length after)` of the affected queue.
    pub fn lengths(&self) -> (u32, u32) {
        match *self {
            Transition::Arrival { new_len, .. } => (new_len - 1, new_len),
            Transition::Departure { new_len, .. } => (new_len + 1, new_len),
        }
    }

    pub fn is_arrival(&self) -> bool {
        matches!(self, Transition::Arrival { .. })
    }
}

/// One event: the time spent in the previous state, then the jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub dwell: f64,
    pub transition: Transition,
}

/// The separate-queue farm as a continuous-time Markov chain, advanced one
/// jump at a time by an aggregate exponential race.
///
/// From state `Q` the next event occurs after `Exp(N lambda + sum_j mu_j B_j)`;
/// it is an arrival with probability proportional to `N lambda`, otherwise a
/// departure from pool `j` with probability proportional to `mu_j B_j`, at a
/// uniformly chosen busy server of that pool. Each server serves its queue in
/// arrival order.
#[derive(Debug, Clone)]
pub struct SeparateSystem {
    spec: SystemSpec,
    policy: PolicyId,
    speeds: Vec<f64>,
    queues: IndexedQueues,
    fifo: Vec<VecDeque<f64>>,
    now: f64,
    arrivals: u64,
    departures: u64,
    events: ChaCha8Rng,
    choices: ChaCha8Rng,
}

impl SeparateSystem {
    pub fn new(spec: &SystemSpec, policy: &PolicyId, initial: &QueueState, seed: u64) -> Result<Self, SimError> {
        policy.validate(spec)?;
        let queues = IndexedQueues::new(spec, initial)?;
        let fifo = initial
            .pools()
            .iter()
            .flatten()
            .map(|&len| std::iter::repeat_n(f64::NEG_INFINITY, len as usize).collect())
            .collect();
        Ok(Self {
            spec: spec.clone(),
            policy: policy.clone(),
            speeds: spec.pools().iter().map(|p| p.speed).collect(),
            queues,
            fifo,
            now: 0.0,
            arrivals: 0,
            departures: 0,
            events: stream_rng(seed, EVENT_STREAM),
            choices: stream_rng(seed, DISPATCH_STREAM),
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn queues(&self) -> &IndexedQueues {
        &self.queues
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn departures(&self) -> u64 {
        self.departures
    }

    /// Arrival times of the jobs currently at every server, flat pool-major.
    pub fn waiting_jobs(&self) -> impl Iterator<Item = f64> + '_ {
        self.fifo.iter().flatten().copied()
    }

    pub fn total_rate(&self) -> f64 {
        self.spec.arrival_rate() + self.queues.departure_rate(&self.speeds)
    }

    /// Samples the next event and applies it.
    pub fn step(&mut self) -> Step {
        let arrival_rate = self.spec.arrival_rate();
        let total = arrival_rate + self.queues.departure_rate(&self.speeds);
        let e: f64 = Exp1.sample(&mut self.events);
        let dwell = e / total;
        self.now += dwell;
        let transition = self.jump(arrival_rate, total);
        Step { dwell, transition }
    }

    /// Advances to `t_end` exactly. Memorylessness lets the last, overshooting
    /// holding time be discarded; the state at `t_end` is the state before it.
    /// `on_step` sees every jump that happens at or before `t_end`.
    pub fn run_until(&mut self, t_end: f64, mut on_step: impl FnMut(&Self, &Step)) {
        loop {
            let arrival_rate = self.spec.arrival_rate();
            let total = arrival_rate + self.queues.departure_rate(&self.speeds);
            let e: f64 = Exp1.sample(&mut self.events);
            let dwell = e / total;
            if self.now + dwell > t_end {
                self.now = self.now.max(t_end);
                return;
            }
            self.now += dwell;
            let transition = self.jump(arrival_rate, total);
            on_step(self, &Step { dwell, transition });
        }
    }

    fn jump(&mut self, arrival_rate: f64, total: f64) -> Transition {
        let u = self.events.random::<f64>() * total;
        if u < arrival_rate {
            let d = dispatch(&self.policy, &self.queues, &self.spec, &mut self.choices)
                .expect("policy validated at construction");
            self.queues.increment(d.pool, d.server);
            self.fifo[self.queues.global_index(d.pool, d.server)].push_back(self.now);
            self.arrivals += 1;
            return Transition::Arrival { pool: d.pool, server: d.server, new_len: self.queues.queue(d.pool, d.server) };
        }
        let mut v = u - arrival_rate;
        let mut pool = self.spec.num_pools() - 1;
        for j in 0..self.spec.num_pools() {
            let r = self.speeds[j] * self.queues.busy_count(j) as f64;
            if v < r {
                pool = j;
                break;
            }
            v -= r;
        }
        // Rounding can leave `pool` pointing at an idle pool; fall back to the
        // slowest busy one.
        while self.queues.busy_count(pool) == 0 {
            pool -= 1;
        }
        let busy = self.queues.busy_count(pool);
        let server = self.queues.nth_busy(pool, self.events.random_range(0..busy));
        self.queues.decrement(pool, server);
        let arrived_at = self.fifo[self.queues.global_index(pool, server)]
            .pop_front()
            .expect("busy server holds a job");
        self.departures += 1;
        Transition::Departure { pool, server, new_len: self.queues.queue(pool, server), arrived_at }
    }
}

/// A one-dimensional jump chain counting jobs.
pub trait CountProcess {
    fn count(&self) -> u64;
    fn birth_rate(&self) -> f64;
    fn death_rate(&self) -> f64;
    fn birth(&mut self);
    fn death<R: Rng + ?Sized>(&mut self, rng: &mut R);
    /// Busy servers per pool, when the process tracks them.
    fn busy(&self) -> Option<&[usize]> {
        None
    }
}

/// Water-filling busy counts: `k` jobs occupy the fastest servers first.
pub fn water_fill(k: u64, spec: &SystemSpec) -> Vec<usize> {
    let mut left = k;
    spec.pool_sizes()
        .iter()
        .map(|&n| {
            let b = left.min(n as u64);
            left -= b;
            b as usize
        })
        .collect()
}

/// The resource-pooled system: one central queue, served by all servers, with
/// the head-of-line job sent to the fastest idle server.
///
/// When a server frees up and nobody waits, the job in service at the slowest
/// busy server moves to it, so the busy vector always has water-filling shape
/// and the total service rate is the pooled rate of the count process.
#[derive(Debug, Clone)]
pub struct PooledSystem {
    spec: SystemSpec,
    busy: Vec<usize>,
    waiting: u64,
}

impl PooledSystem {
    pub fn new(spec: &SystemSpec, jobs: u64) -> Self {
        let busy = water_fill(jobs, spec);
        let in_service: u64 = busy.iter().map(|&b| b as u64).sum();
        Self { spec: spec.clone(), busy, waiting: jobs - in_service }
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    /// Departure from `pool`, which must have a busy server.
    pub fn depart_from(&mut self, pool: usize) {
        assert!(self.busy[pool] > 0, "departure from idle pool {pool}");
        self.busy[pool] -= 1;
        if self.waiting > 0 {
            self.waiting -= 1;
            let j = jffs_select(&self.busy, &self.spec).expect("a server was just freed");
            self.busy[j] += 1;
        } else if let Some(k) = (pool + 1..self.busy.len()).rev().find(|&k| self.busy[k] > 0) {
            self.busy[k] -= 1;
            self.busy[pool] += 1;
        }
    }

    /// Departure pool chosen with probability proportional to `mu_j B_j`.
    pub fn sample_departure_pool<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.death_rate();
        let mut v = rng.random::<f64>() * total;
        for (j, &b) in self.busy.iter().enumerate() {
            let r = self.spec.speed(j) * b as f64;
            if v < r {
                return j;
            }
            v -= r;
        }
        self.busy.iter().rposition(|&b| b > 0).expect("some server is busy")
    }
}

impl CountProcess for PooledSystem {
    fn count(&self) -> u64 {
        self.busy.iter().map(|&b| b as u64).sum::<u64>() + self.waiting
    }

    fn birth_rate(&self) -> f64 {
        self.spec.arrival_rate()
    }

    fn death_rate(&self) -> f64 {
        self.busy.iter().enumerate().map(|(j, &b)| self.spec.speed(j) * b as f64).sum()
    }

    fn birth(&mut self) {
        match jffs_select(&self.busy, &self.spec) {
            Ok(j) => self.busy[j] += 1,
            Err(PolicyError::NoIdleServer) => self.waiting += 1,
            Err(e) => unreachable!("{e}"),
        }
    }

    fn death<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let pool = self.sample_departure_pool(rng);
        self.depart_from(pool);
    }

    fn busy(&self) -> Option<&[usize]> {
        Some(&self.busy)
    }
}

/// M/M/N with unit-rate servers and arrival rate `N lambda`.
#[derive(Debug, Clone)]
pub struct MmnChain {
    n: u64,
    arrival_rate: f64,
    jobs: u64,
}

impl MmnChain {
    pub fn new(n: usize, lambda: f64, jobs: u64) -> Self {
        Self { n: n as u64, arrival_rate: n as f64 * lambda, jobs }
    }
}

impl CountProcess for MmnChain {
    fn count(&self) -> u64 {
        self.jobs
    }

    fn birth_rate(&self) -> f64 {
        self.arrival_rate
    }

    fn death_rate(&self) -> f64 {
        self.jobs.min(self.n) as f64
    }

    fn birth(&mut self) {
        self.jobs += 1;
    }

    fn death<R: Rng + ?Sized>(&mut self, _rng: &mut R) {
        self.jobs -= 1;
    }
}

/// Runs a count process by the exponential race.
#[derive(Debug, Clone)]
pub struct CountChainRunner<P> {
    pub process: P,
    now: f64,
    rng: ChaCha8Rng,
}

/// One jump of a count process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountStep {
    pub dwell: f64,
    pub up: bool,
}

impl<P: CountProcess> CountChainRunner<P> {
    pub fn new(process: P, seed: u64) -> Self {
        Self { process, now: 0.0, rng: stream_rng(seed, EVENT_STREAM) }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn step(&mut self) -> CountStep {
        let up_rate = self.process.birth_rate();
        let total = up_rate + self.process.death_rate();
        let e: f64 = Exp1.sample(&mut self.rng);
        let dwell = e / total;
        self.now += dwell;
        let up = self.rng.random::<f64>() * total < up_rate || self.process.count() == 0;
        if up {
            self.process.birth();
        } else {
            self.process.death(&mut self.rng);
        }
        CountStep { dwell, up }
    }

    /// Advances to `t_end`, discarding the overshooting holding time.
    pub fn run_until(&mut self, t_end: f64) {
        loop {
            let up_rate = self.process.birth_rate();
            let total = up_rate + self.process.death_rate();
            let dwell: f64 = exp1(&mut self.rng) / total;
            if self.now + dwell > t_end {
                self.now = self.now.max(t_end);
                return;
            }
            self.now += dwell;
            if self.rng.random::<f64>() * total < up_rate || self.process.count() == 0 {
                self.process.birth();
            } else {
                self.process.death(&mut self.rng);
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("total_arrivals must be at least 1")]
    NoArrivals,
    #[error("warmup fraction {0} is outside [0, 1)")]
    BadWarmup(f64),
    #[error("sampling interval {0} must be positive")]
    BadInterval(f64),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_busy_vector_keeps_water_filling_shape() {
        let spec = SystemSpec::two_speed_reference(10, 0.9).unwrap();
        let mut runner = CountChainRunner::new(PooledSystem::new(&spec, 0), 11);
        for _ in 0..100_000 {
            runner.step();
            let z = runner.process.count();
            assert_eq!(runner.process.busy().unwrap(), &water_fill(z, &spec)[..], "z = {z}");
        }
    }

    #[test]
    fn water_fill_examples() {
        let spec = SystemSpec::two_speed_reference(10, 0.5).unwrap();
        assert_eq!(water_fill(0, &spec), vec![0, 0]);
        assert_eq!(water_fill(5, &spec), vec![2, 3]);
        assert_eq!(water_fill(12, &spec), vec![2, 8]);
    }

    #[test]
    fn separate_system_conserves_jobs() {
        let spec = SystemSpec::two_speed_reference(10, 0.8).unwrap();
        let mut sys = SeparateSystem::new(&spec, &PolicyId::SaJsq, &QueueState::uniform(&spec, 2), 5).unwrap();
        for _ in 0..20_000 {
            let s = sys.step();
            assert!(s.dwell >= 0.0);
            let in_system = sys.queues().total_jobs();
            assert_eq!(in_system, 20 + sys.arrivals() - sys.departures());
            assert_eq!(sys.waiting_jobs().count() as u64, in_system);
        }
    }

    #[test]
    fn run_until_stops_on_time() {
        let spec = SystemSpec::two_speed_reference(10, 0.5).unwrap();
        let mut sys = SeparateSystem::new(&spec, &PolicyId::Jsq, &QueueState::empty(&spec), 1).unwrap();
        let mut last = 0.0;
        sys.run_until(3.0, |s, _| last = s.now());
        assert_eq!(sys.now(), 3.0);
        assert!(last <= 3.0 && last > 0.0);
    }
}
