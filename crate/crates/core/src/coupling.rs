//! Paired simulations on one probability space, checking sample-path order
//! after every event.
//!
//! Three constructions are provided:
//! * two SA-JSQ farms started from ordered states, sharing a stream of
//!   potential departures and a stream of arrivals ([`MonotonePair`]);
//! * the resource-pooled JFFS count `Z` against the job count `R` of a
//!   separate-queue farm under any policy ([`DominancePair`]);
//! * the pooled count `Z` against the M/M/N count `Y`, both uniformised at rate
//!   `N (lambda + 1)` ([`MmnPair`]).
//!
//! Exponential clocks of rate zero never ring; they are simply left out of the
//! race.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use crate::rng::exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::desim::{CountChainRunner, CountProcess, MmnChain, PooledSystem, SeparateSystem, SimError};
use crate::model::{IndexedQueues, ModelError, QueueState, QueueView, SystemSpec};
use crate::policy::{dispatch, sa_jsq_select, PolicyError, PolicyId};
use crate::rng::{replication_seed, stream_rng, DISPATCH_STREAM, EVENT_STREAM};
use crate::stats::ks_two_sample;

/// Relative slack before a negative pooled-minus-separate rate gap is an error.
pub const RATE_GAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("initial states are not ordered: {0}")]
    InitialOrderViolated(String),
    #[error("pooled departure rate {pooled} is below the separate-system rate {separate} at {jobs} jobs")]
    NegativeRateGap { jobs: u64, pooled: f64, separate: f64 },
    #[error("coupling probability {0} is outside [0, 1]")]
    BernoulliOutOfRange(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Total service rate of the pooled farm holding `jobs` jobs: the fastest
/// servers are filled first.
pub fn jffs_departure_rate(jobs: u64, spec: &SystemSpec) -> f64 {
    let mut left = jobs;
    let mut rate = 0.0;
    for (j, &n) in spec.pool_sizes().iter().enumerate() {
        let b = left.min(n as u64);
        rate += spec.speed(j) * b as f64;
        left -= b;
        if left == 0 {
            break;
        }
    }
    rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub event: u64,
    pub time: f64,
    /// Both states, rendered for diagnosis.
    pub state: String,
}

/// One sample of a coupled path: time, lower count, upper count.
pub type PairSample = (f64, u64, u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub coupling: String,
    pub seed: u64,
    pub events: u64,
    pub violations: u64,
    pub first_violation: Option<ViolationRecord>,
    pub trajectories: Option<Vec<PairSample>>,
    pub sim_time: f64,
    /// Post-warmup time averages of the lower and upper job counts, divided by `N`.
    pub lower_mean_scaled: f64,
    pub upper_mean_scaled: f64,
    /// Smallest pooled-minus-separate departure rate gap seen over visited
    /// states (dominance coupling only).
    pub min_rate_gap: Option<f64>,
}

impl CouplingReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Merges reports of independent runs by summation.
    pub fn merge(&mut self, other: &CouplingReport) {
        let w = self.sim_time + other.sim_time;
        if w > 0.0 {
            self.lower_mean_scaled = (self.lower_mean_scaled * self.sim_time + other.lower_mean_scaled * other.sim_time) / w;
            self.upper_mean_scaled = (self.upper_mean_scaled * self.sim_time + other.upper_mean_scaled * other.sim_time) / w;
        }
        self.events += other.events;
        self.violations += other.violations;
        self.sim_time = w;
        if self.first_violation.is_none() {
            self.first_violation = other.first_violation.clone();
        }
        self.min_rate_gap = match (self.min_rate_gap, other.min_rate_gap) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

/// Two processes driven jointly by one event clock.
pub trait CoupledPair {
    fn name(&self) -> &'static str;
    /// Rate of the joint clock in the current state.
    fn rate(&self) -> f64;
    /// Applies one tick of the joint clock.
    fn jump(&mut self, rng: &mut ChaCha8Rng) -> Result<(), CouplingError>;
    /// Job counts `(lower, upper)`.
    fn counts(&self) -> (u64, u64);
    fn ordered(&self) -> bool;
    fn describe(&self) -> String;
    fn min_rate_gap(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub events: u64,
    pub seed: u64,
    /// Events excluded from the time averages.
    pub warmup_events: u64,
    /// Record `(t, lower, upper)` every this many events.
    pub trajectory_every: Option<u64>,
}

impl RunOptions {
    pub fn new(events: u64, seed: u64) -> Self {
        Self { events, seed, warmup_events: 0, trajectory_every: None }
    }
}

/// Runs `pair` for `opts.events` ticks and counts ticks after which the order
/// is broken.
pub fn run_coupled<P: CoupledPair>(pair: &mut P, opts: &RunOptions) -> Result<CouplingReport, CouplingError> {
    let mut rng = stream_rng(opts.seed, EVENT_STREAM);
    let mut now = 0.0;
    let mut violations = 0;
    let mut first = None;
    let mut traj = opts.trajectory_every.map(|_| vec![(0.0, pair.counts().0, pair.counts().1)]);
    let (mut lo_int, mut hi_int, mut window) = (0.0, 0.0, 0.0);
    for event in 1..=opts.events {
        let rate = pair.rate();
        let dwell = if rate > 0.0 { exp1(&mut rng) / rate } else { 0.0 };
        let (lo, hi) = pair.counts();
        if event > opts.warmup_events {
            lo_int += lo as f64 * dwell;
            hi_int += hi as f64 * dwell;
            window += dwell;
        }
        now += dwell;
        pair.jump(&mut rng)?;
        if !pair.ordered() {
            violations += 1;
            if first.is_none() {
                first = Some(ViolationRecord { event, time: now, state: pair.describe() });
            }
        }
        if let (Some(every), Some(t)) = (opts.trajectory_every, traj.as_mut()) {
            if event % every.max(1) == 0 {
                let (lo, hi) = pair.counts();
                t.push((now, lo, hi));
            }
        }
    }
    let scale = if window > 0.0 { window } else { f64::NAN };
    Ok(CouplingReport {
        coupling: pair.name().to_string(),
        seed: opts.seed,
        events: opts.events,
        violations,
        first_violation: first,
        trajectories: traj,
        sim_time: now,
        lower_mean_scaled: lo_int / scale,
        upper_mean_scaled: hi_int / scale,
        min_rate_gap: pair.min_rate_gap(),
    })
}

/// Monotonicity coupling of two SA-JSQ farms.
///
/// Potential departures ring at rate `N`; a pool is chosen with probability
/// `mu_j gamma_j` and a server of it uniformly, and that server completes a
/// job in each system where it is busy. Arrivals are common. When both systems
/// would send the arrival to the same pool, the smaller system picks a server
/// uniformly among its shortest queues there, and the larger system reuses that
/// index if it is also shortest there, otherwise picks independently.
#[derive(Debug, Clone)]
pub struct MonotonePair {
    spec: SystemSpec,
    small: IndexedQueues,
    large: IndexedQueues,
    choices: ChaCha8Rng,
    /// Servers where the small queue exceeds the large one.
    bad: usize,
    cumulative_weights: Vec<f64>,
}

impl MonotonePair {
    pub fn new(spec: &SystemSpec, small: &QueueState, large: &QueueState, seed: u64) -> Result<Self, CouplingError> {
        let small_idx = IndexedQueues::new(spec, small)?;
        let large_idx = IndexedQueues::new(spec, large)?;
        if !small.dominated_by(large) {
            return Err(CouplingError::InitialOrderViolated(format!("small {:?} vs large {:?}", small.pools(), large.pools())));
        }
        let mut acc = 0.0;
        let cumulative_weights = spec
            .pools()
            .iter()
            .map(|p| {
                acc += p.speed * p.fraction;
                acc
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            small: small_idx,
            large: large_idx,
            choices: stream_rng(seed, DISPATCH_STREAM),
            bad: 0,
            cumulative_weights,
        })
    }

    pub fn small(&self) -> &IndexedQueues {
        &self.small
    }

    pub fn large(&self) -> &IndexedQueues {
        &self.large
    }

    fn is_bad(&self, pool: usize, server: usize) -> bool {
        self.small.queue(pool, server) > self.large.queue(pool, server)
    }

    /// Applies `f` and keeps the count of out-of-order servers current.
    fn update(&mut self, touched: &[(usize, usize)], f: impl FnOnce(&mut Self)) {
        let before: usize = touched.iter().filter(|&&(j, k)| self.is_bad(j, k)).count();
        f(self);
        let after: usize = touched.iter().filter(|&&(j, k)| self.is_bad(j, k)).count();
        self.bad = self.bad + after - before;
    }

    fn arrival(&mut self) {
        let js = self.small.fastest_min_pool();
        let jl = self.large.fastest_min_pool();
        let (ds, dl) = if js == jl {
            let j = js;
            let ms = self.small.pool_min(j);
            let ks = self.small.nth_at(j, ms, self.choices.random_range(0..self.small.count_at(j, ms)));
            let ml = self.large.pool_min(j);
            let kl = if self.large.queue(j, ks) == ml {
                ks
            } else {
                self.large.nth_at(j, ml, self.choices.random_range(0..self.large.count_at(j, ml)))
            };
            ((j, ks), (j, kl))
        } else {
            let a = sa_jsq_select(&self.small, &mut self.choices);
            let b = sa_jsq_select(&self.large, &mut self.choices);
            ((a.pool, a.server), (b.pool, b.server))
        };
        let touched = if ds == dl { vec![ds] } else { vec![ds, dl] };
        self.update(&touched, |s| {
            s.small.increment(ds.0, ds.1);
            s.large.increment(dl.0, dl.1);
        });
    }

    fn potential_departure(&mut self, rng: &mut ChaCha8Rng) {
        let u: f64 = rng.random();
        let total = *self.cumulative_weights.last().expect("at least one pool");
        let pool = self.cumulative_weights.iter().position(|&c| u * total < c).unwrap_or(self.spec.num_pools() - 1);
        let server = rng.random_range(0..self.spec.pool_size(pool));
        self.update(&[(pool, server)], |s| {
            if s.small.queue(pool, server) > 0 {
                s.small.decrement(pool, server);
            }
            if s.large.queue(pool, server) > 0 {
                s.large.decrement(pool, server);
            }
        });
    }
}

impl CoupledPair for MonotonePair {
    fn name(&self) -> &'static str {
        "monotonicity"
    }

    fn rate(&self) -> f64 {
        self.spec.arrival_rate() + self.spec.n_servers() as f64
    }

    fn jump(&mut self, rng: &mut ChaCha8Rng) -> Result<(), CouplingError> {
        let a = self.spec.arrival_rate();
        if rng.random::<f64>() * self.rate() < a {
            self.arrival();
        } else {
            self.potential_departure(rng);
        }
        Ok(())
    }

    fn counts(&self) -> (u64, u64) {
        (self.small.total_jobs(), self.large.total_jobs())
    }

    fn ordered(&self) -> bool {
        self.bad == 0
    }

    fn describe(&self) -> String {
        format!("small {:?} large {:?}", self.small.to_state().pools(), self.large.to_state().pools())
    }
}

/// Pooled JFFS count `Z` against a separate-queue farm `R` under a policy.
///
/// Arrivals are common. While `Z < R` the departure clocks are independent.
/// When `Z = R`, a joint departure rings at the separate farm's service rate
/// and a pooled-only departure at the remaining gap to the pooled rate.
#[derive(Debug, Clone)]
pub struct DominancePair {
    spec: SystemSpec,
    policy: PolicyId,
    pooled: PooledSystem,
    separate: IndexedQueues,
    speeds: Vec<f64>,
    choices: ChaCha8Rng,
    min_gap: f64,
}

impl DominancePair {
    pub fn new(
        spec: &SystemSpec,
        policy: &PolicyId,
        pooled_jobs: u64,
        separate: &QueueState,
        seed: u64,
    ) -> Result<Self, CouplingError> {
        policy.validate(spec)?;
        let separate = IndexedQueues::new(spec, separate)?;
        if pooled_jobs > separate.total_jobs() {
            return Err(CouplingError::InitialOrderViolated(format!(
                "pooled {pooled_jobs} > separate {}",
                separate.total_jobs()
            )));
        }
        let speeds = spec.pools().iter().map(|p| p.speed).collect();
        let mut pair = Self {
            spec: spec.clone(),
            policy: policy.clone(),
            pooled: PooledSystem::new(spec, pooled_jobs),
            separate,
            speeds,
            choices: stream_rng(seed, DISPATCH_STREAM),
            min_gap: f64::INFINITY,
        };
        pair.record_gap();
        Ok(pair)
    }

    /// Lemma-4 style check on the separate farm's current state.
    fn record_gap(&mut self) {
        let r = self.separate.total_jobs();
        let gap = jffs_departure_rate(r, &self.spec) - self.separate.departure_rate(&self.speeds);
        self.min_gap = self.min_gap.min(gap);
    }

    fn z(&self) -> u64 {
        self.pooled.count()
    }

    fn depart_separate(&mut self, rng: &mut ChaCha8Rng) {
        let total = self.separate.departure_rate(&self.speeds);
        let mut v = rng.random::<f64>() * total;
        let mut pool = self.spec.num_pools() - 1;
        for j in 0..self.spec.num_pools() {
            let r = self.speeds[j] * self.separate.busy_count(j) as f64;
            if v < r {
                pool = j;
                break;
            }
            v -= r;
        }
        while self.separate.busy_count(pool) == 0 {
            pool -= 1;
        }
        let server = self.separate.nth_busy(pool, rng.random_range(0..self.separate.busy_count(pool)));
        self.separate.decrement(pool, server);
    }
}

impl CoupledPair for DominancePair {
    fn name(&self) -> &'static str {
        "dominance"
    }

    fn rate(&self) -> f64 {
        let a = self.spec.arrival_rate();
        if self.z() == self.separate.total_jobs() {
            a + self.pooled.death_rate()
        } else {
            a + self.pooled.death_rate() + self.separate.departure_rate(&self.speeds)
        }
    }

    fn jump(&mut self, rng: &mut ChaCha8Rng) -> Result<(), CouplingError> {
        let a = self.spec.arrival_rate();
        let rz = self.pooled.death_rate();
        let rr = self.separate.departure_rate(&self.speeds);
        let z = self.z();
        let equal = z == self.separate.total_jobs();
        let total = if equal { a + rz } else { a + rz + rr };
        let u = rng.random::<f64>() * total;
        if u < a {
            self.pooled.birth();
            let d = dispatch(&self.policy, &self.separate, &self.spec, &mut self.choices)?;
            self.separate.increment(d.pool, d.server);
        } else if equal {
            let gap = rz - rr;
            if gap < -RATE_GAP_TOLERANCE * rz.max(1.0) {
                return Err(CouplingError::NegativeRateGap { jobs: z, pooled: rz, separate: rr });
            }
            if u - a < rr {
                self.pooled.death(rng);
                self.depart_separate(rng);
            } else {
                self.pooled.death(rng);
            }
        } else if u - a < rz {
            self.pooled.death(rng);
        } else {
            self.depart_separate(rng);
        }
        self.record_gap();
        Ok(())
    }

    fn counts(&self) -> (u64, u64) {
        (self.z(), self.separate.total_jobs())
    }

    fn ordered(&self) -> bool {
        self.z() <= self.separate.total_jobs()
    }

    fn describe(&self) -> String {
        format!(
            "pooled Z={} busy {:?}; separate R={} queues {:?}",
            self.z(),
            self.pooled.busy().unwrap_or(&[]),
            self.separate.total_jobs(),
            self.separate.to_state().pools()
        )
    }

    fn min_rate_gap(&self) -> Option<f64> {
        Some(self.min_gap)
    }
}

/// How the uniformised chains move while their states differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnequalSteps {
    /// One uniform variable drives both chains' step choices.
    SharedUniform,
    /// Separate uniforms for the two chains.
    Independent,
}

/// Pooled count `Z` against the M/M/N count `Y`, embedded in a Poisson clock
/// of rate `B = N (lambda + 1)`.
///
/// When `Z = Y = k`, `Y` steps first; `Z` copies a move of `Y`, and if `Y`
/// stays, `Z` steps down with probability
/// `(pZ(k, k-1) - pY(k, k-1)) / pY(k, k)`.
#[derive(Debug, Clone)]
pub struct MmnPair {
    spec: SystemSpec,
    z: u64,
    y: u64,
    mode: UnequalSteps,
}

impl MmnPair {
    pub fn new(spec: &SystemSpec, z: u64, y: u64, mode: UnequalSteps) -> Result<Self, CouplingError> {
        if z > y {
            return Err(CouplingError::InitialOrderViolated(format!("Z={z} > Y={y}")));
        }
        Ok(Self { spec: spec.clone(), z, y, mode })
    }

    fn clock(&self) -> f64 {
        self.spec.n_servers() as f64 * (self.spec.lambda() + 1.0)
    }

    fn down_z(&self, k: u64) -> f64 {
        jffs_departure_rate(k, &self.spec) / self.clock()
    }

    fn down_y(&self, k: u64) -> f64 {
        k.min(self.spec.n_servers() as u64) as f64 / self.clock()
    }

    fn up(&self) -> f64 {
        self.spec.arrival_rate() / self.clock()
    }

    /// Step of a chain in state `k` with down-probability `down`, driven by `u`.
    fn step(k: u64, up: f64, down: f64, u: f64) -> u64 {
        if u < up {
            k + 1
        } else if u < up + down {
            k - 1
        } else {
            k
        }
    }

    /// Probability that `Z` steps down alone when both chains sit at `k` and
    /// `Y` stays.
    pub fn theta_probability(&self, k: u64) -> Result<f64, CouplingError> {
        let num = self.down_z(k) - self.down_y(k);
        if num == 0.0 {
            return Ok(0.0);
        }
        let stay = 1.0 - self.up() - self.down_y(k);
        let p = num / stay;
        if !(-1e-12..=1.0 + 1e-12).contains(&p) || !p.is_finite() {
            return Err(CouplingError::BernoulliOutOfRange(p));
        }
        Ok(p.clamp(0.0, 1.0))
    }
}

impl CoupledPair for MmnPair {
    fn name(&self) -> &'static str {
        "mmn"
    }

    fn rate(&self) -> f64 {
        self.clock()
    }

    fn jump(&mut self, rng: &mut ChaCha8Rng) -> Result<(), CouplingError> {
        let up = self.up();
        if self.z == self.y {
            let k = self.y;
            let u: f64 = rng.random();
            let y_next = Self::step(k, up, self.down_y(k), u);
            let z_next = if y_next != k {
                y_next
            } else {
                let theta = rng.random::<f64>() < self.theta_probability(k)?;
                k - u64::from(theta)
            };
            self.y = y_next;
            self.z = z_next;
            return Ok(());
        }
        let u: f64 = rng.random();
        let v: f64 = match self.mode {
            UnequalSteps::SharedUniform => u,
            UnequalSteps::Independent => rng.random(),
        };
        self.z = Self::step(self.z, up, self.down_z(self.z), u);
        self.y = Self::step(self.y, up, self.down_y(self.y), v);
        Ok(())
    }

    fn counts(&self) -> (u64, u64) {
        (self.z, self.y)
    }

    fn ordered(&self) -> bool {
        self.z <= self.y
    }

    fn describe(&self) -> String {
        format!("Z={} Y={}", self.z, self.y)
    }
}

fn scale_report(mut r: CouplingReport, spec: &SystemSpec) -> CouplingReport {
    let n = spec.n_servers() as f64;
    r.lower_mean_scaled /= n;
    r.upper_mean_scaled /= n;
    r
}

/// Monotonicity coupling from `q_small <= q_large`.
pub fn coupled_monotonicity_run(
    spec: &SystemSpec,
    q_small: &QueueState,
    q_large: &QueueState,
    events: u64,
    seed: u64,
) -> Result<CouplingReport, CouplingError> {
    coupled_monotonicity_with(spec, q_small, q_large, &RunOptions::new(events, seed))
}

pub fn coupled_monotonicity_with(
    spec: &SystemSpec,
    q_small: &QueueState,
    q_large: &QueueState,
    opts: &RunOptions,
) -> Result<CouplingReport, CouplingError> {
    let mut pair = MonotonePair::new(spec, q_small, q_large, opts.seed)?;
    Ok(scale_report(run_coupled(&mut pair, opts)?, spec))
}

/// Pooled-versus-separate dominance coupling, both systems starting empty.
pub fn coupled_dominance_run(
    spec: &SystemSpec,
    policy: &PolicyId,
    events: u64,
    seed: u64,
) -> Result<CouplingReport, CouplingError> {
    coupled_dominance_with(spec, policy, 0, &QueueState::empty(spec), &RunOptions::new(events, seed))
}

pub fn coupled_dominance_with(
    spec: &SystemSpec,
    policy: &PolicyId,
    pooled_jobs: u64,
    separate: &QueueState,
    opts: &RunOptions,
) -> Result<CouplingReport, CouplingError> {
    let mut pair = DominancePair::new(spec, policy, pooled_jobs, separate, opts.seed)?;
    Ok(scale_report(run_coupled(&mut pair, opts)?, spec))
}

/// Uniformised pooled-versus-M/M/N coupling, both chains starting empty.
pub fn coupled_mmn_run(spec: &SystemSpec, events: u64, seed: u64) -> Result<CouplingReport, CouplingError> {
    coupled_mmn_with(spec, 0, 0, UnequalSteps::SharedUniform, &RunOptions::new(events, seed))
}

pub fn coupled_mmn_with(
    spec: &SystemSpec,
    z0: u64,
    y0: u64,
    mode: UnequalSteps,
    opts: &RunOptions,
) -> Result<CouplingReport, CouplingError> {
    let mut pair = MmnPair::new(spec, z0, y0, mode)?;
    Ok(scale_report(run_coupled(&mut pair, opts)?, spec))
}

/// Per-replication observations of one process at a fixed horizon: the job
/// count at the horizon and the time from the horizon to its next change.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarginalSample {
    pub occupancy: Vec<f64>,
    pub next_jump: Vec<f64>,
}

/// Cap on ticks spent waiting for a component to move after the horizon.
const NEXT_JUMP_TICK_LIMIT: u64 = 1_000_000;

/// Runs `pair` to time `horizon` (dropping the overshooting holding time)
/// and then until each component has changed once.
fn observe_pair<P: CoupledPair>(pair: &mut P, horizon: f64, seed: u64) -> Result<[(f64, f64); 2], CouplingError> {
    let mut rng = stream_rng(seed, EVENT_STREAM);
    let mut now = 0.0;
    loop {
        let dwell: f64 = exp1(&mut rng) / pair.rate();
        if now + dwell > horizon {
            break;
        }
        now += dwell;
        pair.jump(&mut rng)?;
    }
    let start = pair.counts();
    let mut t = horizon;
    let mut next: [Option<f64>; 2] = [None, None];
    for _ in 0..NEXT_JUMP_TICK_LIMIT {
        t += exp1(&mut rng) / pair.rate();
        pair.jump(&mut rng)?;
        let (lo, hi) = pair.counts();
        if next[0].is_none() && lo != start.0 {
            next[0] = Some(t - horizon);
        }
        if next[1].is_none() && hi != start.1 {
            next[1] = Some(t - horizon);
        }
        if next.iter().all(Option::is_some) {
            break;
        }
    }
    Ok([
        (start.0 as f64, next[0].unwrap_or(f64::INFINITY)),
        (start.1 as f64, next[1].unwrap_or(f64::INFINITY)),
    ])
}

/// Marginal observations of both components over `reps` replications.
pub fn coupled_marginals<P: CoupledPair>(
    mut make: impl FnMut(u64) -> Result<P, CouplingError>,
    reps: u64,
    horizon: f64,
    root_seed: u64,
) -> Result<(MarginalSample, MarginalSample), CouplingError> {
    let mut lower = MarginalSample::default();
    let mut upper = MarginalSample::default();
    for r in 0..reps {
        let seed = replication_seed(root_seed, r);
        let mut pair = make(seed)?;
        let [(lo, lo_next), (hi, hi_next)] = observe_pair(&mut pair, horizon, seed)?;
        lower.occupancy.push(lo);
        lower.next_jump.push(lo_next);
        upper.occupancy.push(hi);
        upper.next_jump.push(hi_next);
    }
    Ok((lower, upper))
}

/// Marginal observations of an uncoupled separate-queue farm.
pub fn separate_marginals(
    spec: &SystemSpec,
    policy: &PolicyId,
    initial: &QueueState,
    reps: u64,
    horizon: f64,
    root_seed: u64,
) -> Result<MarginalSample, CouplingError> {
    let mut out = MarginalSample::default();
    for r in 0..reps {
        let mut sys = SeparateSystem::new(spec, policy, initial, replication_seed(root_seed, r))?;
        sys.run_until(horizon, |_, _| {});
        out.occupancy.push(sys.queues().total_jobs() as f64);
        out.next_jump.push(sys.step().dwell);
    }
    Ok(out)
}

/// Marginal observations of an uncoupled count process.
pub fn count_marginals<P: CountProcess>(
    mut make: impl FnMut() -> P,
    reps: u64,
    horizon: f64,
    root_seed: u64,
) -> MarginalSample {
    let mut out = MarginalSample::default();
    for r in 0..reps {
        let mut runner = CountChainRunner::new(make(), replication_seed(root_seed, r));
        runner.run_until(horizon);
        out.occupancy.push(runner.process.count() as f64);
        out.next_jump.push(runner.step().dwell);
    }
    out
}

/// Kolmogorov-Smirnov p-values `(occupancy, next jump)` of two samples.
pub fn ks_marginal_pvalues(a: &MarginalSample, b: &MarginalSample) -> (f64, f64) {
    (ks_two_sample(&a.occupancy, &b.occupancy).1, ks_two_sample(&a.next_jump, &b.next_jump).1)
}

/// Pooled JFFS count process used as the uncoupled reference for `Z`.
pub fn pooled_process(spec: &SystemSpec, jobs: u64) -> PooledSystem {
    PooledSystem::new(spec, jobs)
}

/// M/M/N count process used as the uncoupled reference for `Y`.
pub fn mmn_process(spec: &SystemSpec, jobs: u64) -> MmnChain {
    MmnChain::new(spec.n_servers(), spec.lambda(), jobs)
}
