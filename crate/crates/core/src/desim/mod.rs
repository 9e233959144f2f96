//! Discrete-event simulation of the separate-queue farm, the resource-pooled
//! farm and the M/M/N reference chain, with steady-state estimators.
//!
//! Runs are driven by arrival counts: the first `warmup_fraction` of the
//! arrivals are discarded, statistics are time-weighted over the rest, and the
//! run stops at the last arrival. A job's response time is recorded iff it
//! arrives after the warmup; such jobs still queued at the end are reported as
//! censored. Standard errors come from batch means over contiguous groups of
//! post-warmup arrivals.

mod engine;
mod observe;


use serde::{Deserialize, Serialize};

pub use engine::{
    water_fill, CountChainRunner, CountProcess, CountStep, MmnChain, PooledSystem, SeparateSystem, SimError, Step,
    Transition,
};

use crate::model::{tail_measure_from_queues, ModelError, QueueState, QueueView, SystemSpec, TailMeasure, DEFAULT_DEPTH};
use crate::policy::PolicyId;
use crate::stats::{batch_means, Estimate};
pub use crate::model::io::write_trajectory_csv;
use observe::{tail_fractions, DistanceTracker, Occupancy};

pub const DEFAULT_ARRIVALS: u64 = 300_000;
pub const DEFAULT_WARMUP: f64 = 0.5;
pub const DEFAULT_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: SystemSpec,
    /// Ignored by the pooled and M/M/N simulators.
    pub policy: PolicyId,
    pub total_arrivals: u64,
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Minimum depth of the reported tail measure; it grows to the largest
    /// queue observed.
    pub tail_depth: usize,
    /// Starting state; empty when absent.
    pub initial: Option<QueueState>,
    /// When set, the time average of `sum_{i,j} |x[i][j] - reference[i][j]|` is
    /// reported.
    pub distance_reference: Option<TailMeasure>,
    pub batches: usize,
}

impl SimConfig {
    pub fn new(spec: SystemSpec, policy: PolicyId) -> Self {
        Self {
            spec,
            policy,
            total_arrivals: DEFAULT_ARRIVALS,
            warmup_fraction: DEFAULT_WARMUP,
            seed: 0,
            tail_depth: DEFAULT_DEPTH,
            initial: None,
            distance_reference: None,
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn arrivals(mut self, n: u64) -> Self {
        self.total_arrivals = n;
        self
    }

    pub fn warmup(mut self, fraction: f64) -> Self {
        self.warmup_fraction = fraction;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn tail_depth(mut self, depth: usize) -> Self {
        self.tail_depth = depth;
        self
    }

    pub fn initial(mut self, q: QueueState) -> Self {
        self.initial = Some(q);
        self
    }

    pub fn distance_to(mut self, reference: TailMeasure) -> Self {
        self.distance_reference = Some(reference);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.total_arrivals == 0 {
            return Err(SimError::NoArrivals);
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::BadWarmup(self.warmup_fraction));
        }
        if self.tail_depth == 0 {
            return Err(ModelError::ZeroDepth.into());
        }
        if let Some(q) = &self.initial {
            QueueState::new(&self.spec, q.pools().to_vec())?;
        }
        Ok(())
    }

    fn warmup_arrivals(&self) -> u64 {
        (self.warmup_fraction * self.total_arrivals as f64).floor() as u64
    }

    /// Arrival indices closing each batch.
    fn batch_ends(&self) -> Vec<u64> {
        let w = self.warmup_arrivals();
        let post = self.total_arrivals - w;
        let nb = (self.batches.max(1) as u64).min(post).max(1);
        (1..=nb).map(|b| w + (b * post).div_ceil(nb)).collect()
    }
}

/// `P(Q >= l)` for a server of each pool, `l = 1..=depth`, with batch-means
/// standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProbabilities {
    pub prob: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
}

impl TailProbabilities {
    pub fn depth(&self) -> usize {
        self.prob.first().map_or(0, Vec::len)
    }

    /// Level 0 is certain; levels past the depth were never observed.
    pub fn get(&self, pool: usize, level: usize) -> f64 {
        match level {
            0 => 1.0,
            l => self.prob[pool].get(l - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn std_err(&self, pool: usize, level: usize) -> f64 {
        match level {
            0 => 0.0,
            l => self.std_err[pool].get(l - 1).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mean_response_time: f64,
    pub response_time_se: f64,
    /// Time average of jobs in system divided by `N`.
    pub mean_jobs_scaled: f64,
    pub jobs_scaled_se: f64,
    pub stationary_tail: TailMeasure,
    pub tail_probabilities: TailProbabilities,
    pub event_count: u64,
    pub sim_time: f64,
    /// Length of the post-warmup window.
    pub observed_time: f64,
    pub completed_jobs: u64,
    pub censored_jobs: u64,
    pub max_queue: u32,
    pub mean_distance: Option<Estimate>,
    pub seed: u64,
}

impl RunMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialise")
    }
}

#[derive(Debug, Default, Clone)]
struct Batch {
    duration: f64,
    jobs: f64,
    distance: f64,
    rt_sum: f64,
    rt_count: u64,
    occupancy: Vec<Vec<f64>>,
}

fn pad(mut v: Vec<f64>, depth: usize) -> Vec<f64> {
    v.resize(depth, 0.0);
    v
}

fn summarise_tails(batches: &[Batch], spec: &SystemSpec, min_depth: usize) -> (TailMeasure, TailProbabilities) {
    let pools = batches[0].occupancy.len();
    let mut total: Vec<Vec<f64>> = vec![Vec::new(); pools];
    for b in batches {
        for (j, col) in b.occupancy.iter().enumerate() {
            if total[j].len() < col.len() {
                total[j].resize(col.len(), 0.0);
            }
            for (t, v) in total[j].iter_mut().zip(col) {
                *t += v;
            }
        }
    }
    let duration: f64 = batches.iter().map(|b| b.duration).sum();
    let fractions = tail_fractions(&total, spec, duration);
    let depth = fractions.iter().map(Vec::len).max().unwrap_or(0).max(min_depth);
    let fractions: Vec<Vec<f64>> =
        fractions.into_iter().map(|c| pad(c.into_iter().map(|v| v.min(1.0)).collect(), depth)).collect();
    let per_batch: Vec<Vec<Vec<f64>>> = batches
        .iter()
        .map(|b| tail_fractions(&b.occupancy, spec, b.duration).into_iter().map(|c| pad(c, depth)).collect())
        .collect();
    let std_err = (0..pools)
        .map(|j| {
            (0..depth)
                .map(|i| batch_means(&per_batch.iter().map(|b| b[j][i]).collect::<Vec<_>>()).std_err)
                .collect()
        })
        .collect();
    let tail = TailMeasure::new(depth, fractions.clone()).expect("time averages of tail measures are tail measures");
    (tail, TailProbabilities { prob: fractions, std_err })
}

fn ratio_estimate(num: impl Fn(&Batch) -> f64, den: impl Fn(&Batch) -> f64, batches: &[Batch]) -> (f64, f64) {
    let n: f64 = batches.iter().map(&num).sum();
    let d: f64 = batches.iter().map(&den).sum();
    let per: Vec<f64> = batches.iter().filter(|b| den(b) > 0.0).map(|b| num(b) / den(b)).collect();
    let se = if per.len() >= 2 { batch_means(&per).std_err } else { f64::NAN };
    (if d > 0.0 { n / d } else { f64::NAN }, se)
}

/// Simulates the separate-queue farm under `cfg.policy`.
pub fn simulate_separate(cfg: &SimConfig) -> Result<RunMetrics, SimError> {
    cfg.validate()?;
    let spec = &cfg.spec;
    let n = spec.n_servers() as f64;
    let initial = cfg.initial.clone().unwrap_or_else(|| QueueState::empty(spec));
    let mut sys = SeparateSystem::new(spec, &cfg.policy, &initial, cfg.seed)?;
    let warm = cfg.warmup_arrivals();
    let ends = cfg.batch_ends();
    let mut next_end = 0usize;

    let mut observing = warm == 0;
    let mut warm_time = if observing { 0.0 } else { f64::INFINITY };
    let mut occupancy = Occupancy::new(spec.num_pools(), 0.0);
    let mut tracker = cfg.distance_reference.clone().map(|r| DistanceTracker::new(r, sys.queues(), spec));
    let mut batches = Vec::with_capacity(ends.len());
    let mut cur = Batch::default();
    let mut batch_start = 0.0;
    let mut max_queue = initial.max_queue();

    while sys.arrivals() < cfg.total_arrivals {
        let jobs_before = sys.queues().total_jobs() as f64;
        let dist_before = tracker.as_ref().map_or(0.0, DistanceTracker::value);
        let step = sys.step();
        let now = sys.now();
        if observing {
            cur.jobs += jobs_before * step.dwell;
            cur.distance += dist_before * step.dwell;
        }
        let (old, new) = step.transition.lengths();
        let pool = step.transition.pool();
        max_queue = max_queue.max(new);
        occupancy.on_change(sys.queues(), pool, old, new, now);
        if let Some(t) = tracker.as_mut() {
            t.on_change(pool, old, new);
        }
        match step.transition {
            Transition::Departure { arrived_at, .. } if arrived_at > warm_time => {
                cur.rt_sum += now - arrived_at;
                cur.rt_count += 1;
            }
            Transition::Arrival { .. } => {
                if !observing && sys.arrivals() == warm {
                    observing = true;
                    warm_time = now;
                    batch_start = now;
                    occupancy.take(sys.queues(), now);
                } else if observing && sys.arrivals() == ends[next_end] {
                    cur.duration = now - batch_start;
                    cur.occupancy = occupancy.take(sys.queues(), now);
                    batches.push(std::mem::take(&mut cur));
                    batch_start = now;
                    next_end += 1;
                }
            }
            _ => {}
        }
    }

    let censored = sys.waiting_jobs().filter(|&t| t > warm_time).count() as u64;
    let (mean_jobs_scaled, jobs_se) = ratio_estimate(|b| b.jobs / n, |b| b.duration, &batches);
    let (mrt, mrt_se) = ratio_estimate(|b| b.rt_sum, |b| b.rt_count as f64, &batches);
    let mean_distance = tracker.map(|_| {
        let (mean, se) = ratio_estimate(|b| b.distance, |b| b.duration, &batches);
        let mut e = batch_means(&batches.iter().map(|b| b.distance / b.duration).collect::<Vec<_>>());
        e.mean = mean;
        e.std_err = se;
        e
    });
    let (stationary_tail, tail_probabilities) = summarise_tails(&batches, spec, cfg.tail_depth);
    Ok(RunMetrics {
        mean_response_time: mrt,
        response_time_se: mrt_se,
        mean_jobs_scaled,
        jobs_scaled_se: jobs_se,
        max_queue,
        stationary_tail,
        tail_probabilities,
        event_count: sys.arrivals() + sys.departures(),
        sim_time: sys.now(),
        observed_time: sys.now() - if warm == 0 { 0.0 } else { warm_time },
        completed_jobs: batches.iter().map(|b| b.rt_count).sum(),
        censored_jobs: censored,
        mean_distance,
        seed: cfg.seed,
    })
}

/// Runs a count process; `columns` maps the process to per-pool busy counts.
fn simulate_count<P: CountProcess>(
    cfg: &SimConfig,
    process: P,
    columns: impl Fn(&P) -> Vec<usize>,
    sizes: &[usize],
) -> Result<RunMetrics, SimError> {
    cfg.validate()?;
    let n = cfg.spec.n_servers() as f64;
    let lambda = cfg.spec.lambda();
    let warm = cfg.warmup_arrivals();
    let ends = cfg.batch_ends();
    let mut next_end = 0usize;
    let mut runner = CountChainRunner::new(process, cfg.seed);
    let mut arrivals = 0u64;
    let mut departures = 0u64;
    let mut observing = warm == 0;
    let mut warm_time = 0.0;
    let mut batch_start = 0.0;
    let mut batches: Vec<Batch> = Vec::with_capacity(ends.len());
    let mut cur = Batch::default();
    let mut busy_int = vec![0.0; sizes.len()];
    let mut busy_batches: Vec<Vec<f64>> = Vec::new();
    let mut max_count = runner.process.count();

    while arrivals < cfg.total_arrivals {
        let before = runner.process.count() as f64;
        let busy_before = columns(&runner.process);
        let step = runner.step();
        if observing {
            cur.jobs += before * step.dwell;
            for (acc, b) in busy_int.iter_mut().zip(&busy_before) {
                *acc += *b as f64 * step.dwell;
            }
        }
        max_count = max_count.max(runner.process.count());
        if !step.up {
            if observing {
                cur.rt_count += 1;
            }
            departures += 1;
            continue;
        }
        arrivals += 1;
        let now = runner.now();
        if !observing && arrivals == warm {
            observing = true;
            warm_time = now;
            batch_start = now;
        } else if observing && arrivals == ends[next_end] {
            cur.duration = now - batch_start;
            batches.push(std::mem::take(&mut cur));
            busy_batches.push(std::mem::replace(&mut busy_int, vec![0.0; sizes.len()]));
            batch_start = now;
            next_end += 1;
        }
    }

    let (mean_jobs_scaled, jobs_se) = ratio_estimate(|b| b.jobs / n, |b| b.duration, &batches);
    let duration: f64 = batches.iter().map(|b| b.duration).sum();
    let prob: Vec<Vec<f64>> = (0..sizes.len())
        .map(|j| {
            let v: f64 = busy_batches.iter().map(|b| b[j]).sum();
            vec![(v / (duration * sizes[j] as f64)).min(1.0)]
        })
        .collect();
    let std_err = (0..sizes.len())
        .map(|j| {
            let per: Vec<f64> =
                busy_batches.iter().zip(&batches).map(|(b, bt)| b[j] / (bt.duration * sizes[j] as f64)).collect();
            vec![batch_means(&per).std_err]
        })
        .collect();
    Ok(RunMetrics {
        mean_response_time: mean_jobs_scaled / lambda,
        response_time_se: jobs_se / lambda,
        mean_jobs_scaled,
        jobs_scaled_se: jobs_se,
        stationary_tail: TailMeasure::new(1, prob.clone())?,
        tail_probabilities: TailProbabilities { prob, std_err },
        event_count: arrivals + departures,
        sim_time: runner.now(),
        observed_time: runner.now() - warm_time,
        completed_jobs: batches.iter().map(|b| b.rt_count).sum(),
        censored_jobs: 0,
        max_queue: max_count.min(u64::from(u32::MAX)) as u32,
        mean_distance: None,
        seed: cfg.seed,
    })
}

/// Simulates the resource-pooled farm under JFFS. The tail measure has depth
/// one and holds the busy fraction of each pool; the mean response time is
/// `E[Z] / (N lambda)` by Little's law.
pub fn simulate_pooled_jffs(cfg: &SimConfig) -> Result<RunMetrics, SimError> {
    let jobs = cfg.initial.as_ref().map_or(0, QueueView::total_jobs);
    let process = PooledSystem::new(&cfg.spec, jobs);
    simulate_count(cfg, process, |p| p.busy().expect("pooled system tracks pools").to_vec(), cfg.spec.pool_sizes())
}

/// Simulates the M/M/N chain with unit-rate servers and arrival rate
/// `N lambda`. Pools are ignored: the single tail column is the busy fraction.
pub fn simulate_mmn(cfg: &SimConfig) -> Result<RunMetrics, SimError> {
    let n = cfg.spec.n_servers();
    let jobs = cfg.initial.as_ref().map_or(0, QueueView::total_jobs);
    let process = MmnChain::new(n, cfg.spec.lambda(), jobs);
    simulate_count(cfg, process, move |p| vec![p.count().min(n as u64) as usize], &[n])
}

/// Per-pool stationary tail probabilities `P(Q >= l)` of a run. Servers of a
/// pool are exchangeable, so this is the time-averaged tail measure.
pub fn estimate_tail_probabilities(metrics: &RunMetrics, spec: &SystemSpec) -> TailProbabilities {
    debug_assert!(metrics.tail_probabilities.prob.len() <= spec.num_pools().max(1));
    metrics.tail_probabilities.clone()
}

/// Empirical tail measure of one path sampled every `every` time units on
/// `[0, t_end]`.
pub fn simulate_trajectory(
    spec: &SystemSpec,
    policy: &PolicyId,
    initial: &QueueState,
    t_end: f64,
    every: f64,
    seed: u64,
    depth: usize,
) -> Result<Vec<(f64, TailMeasure)>, SimError> {
    if !(every > 0.0) {
        return Err(SimError::BadInterval(every));
    }
    let mut sys = SeparateSystem::new(spec, policy, initial, seed)?;
    let samples = (t_end / every + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(samples + 1);
    for k in 0..=samples {
        let t = k as f64 * every;
        sys.run_until(t, |_, _| {});
        let top = (0..spec.num_pools()).map(|j| sys.queues().max_len(j)).max().unwrap_or(0) as usize;
        out.push((t, tail_measure_from_queues(sys.queues(), spec, depth.max(top))?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1(lambda: f64) -> SystemSpec {
        SystemSpec::from_rates(&[1.0], &[1.0], 1, lambda).unwrap()
    }

    #[test]
    fn config_validation() {
        let spec = mm1(0.5);
        assert!(SimConfig::new(spec.clone(), PolicyId::SaJsq).arrivals(0).validate().is_err());
        assert!(SimConfig::new(spec.clone(), PolicyId::SaJsq).warmup(1.0).validate().is_err());
        assert!(SimConfig::new(spec.clone(), PolicyId::SqD(2)).validate().is_ok());
        assert!(simulate_separate(&SimConfig::new(spec, PolicyId::SqD(2))).is_err());
    }

    #[test]
    fn batch_ends_cover_post_warmup() {
        let cfg = SimConfig::new(mm1(0.5), PolicyId::SaJsq).arrivals(100).warmup(0.5);
        let ends = cfg.batch_ends();
        assert_eq!(ends.len(), 20);
        assert_eq!(ends[0], 53);
        assert_eq!(*ends.last().unwrap(), 100);
        let cfg = SimConfig::new(mm1(0.5), PolicyId::SaJsq).arrivals(5).warmup(0.0);
        assert_eq!(cfg.batch_ends(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SystemSpec::two_speed_reference(20, 0.8).unwrap();
        let cfg = SimConfig::new(spec, PolicyId::SaJsq).arrivals(20_000).seed(9);
        let a = simulate_separate(&cfg).unwrap();
        let b = simulate_separate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_separate(&cfg.clone().seed(10)).unwrap();
        assert_ne!(a.mean_response_time, c.mean_response_time);
    }

    #[test]
    fn mm1_mean_and_tail() {
        let cfg = SimConfig::new(mm1(0.5), PolicyId::SaJsq).arrivals(200_000).seed(1);
        let m = simulate_separate(&cfg).unwrap();
        assert!((m.mean_response_time - 2.0).abs() < 0.1, "{}", m.mean_response_time);
        assert!((m.mean_jobs_scaled - 1.0).abs() < 0.06);
        for l in 1..=4 {
            let p = m.tail_probabilities.get(0, l);
            assert!((p - 0.5f64.powi(l as i32)).abs() < 0.03, "l = {l}: {p}");
        }
        assert!(m.stationary_tail.depth() >= DEFAULT_DEPTH);
        assert!(m.completed_jobs > 90_000);
    }

    #[test]
    fn pooled_and_mmn_single_server() {
        let cfg = SimConfig::new(mm1(0.5), PolicyId::SaJsq).arrivals(200_000).seed(2);
        let p = simulate_pooled_jffs(&cfg).unwrap();
        assert!((p.mean_response_time - 2.0).abs() < 0.1);
        assert!((p.tail_probabilities.get(0, 1) - 0.5).abs() < 0.02);
        let y = simulate_mmn(&cfg).unwrap();
        assert!((y.mean_jobs_scaled - 1.0).abs() < 0.06);
    }

    #[test]
    fn trajectory_sampling() {
        let spec = SystemSpec::two_speed_reference(10, 0.5).unwrap();
        let traj =
            simulate_trajectory(&spec, &PolicyId::SaJsq, &QueueState::uniform(&spec, 2), 1.0, 0.25, 3, 4).unwrap();
        assert_eq!(traj.len(), 5);
        assert_eq!(traj[0].1.get(2, 1), 1.0);
        let mut buf = Vec::new();
        write_trajectory_csv(&traj[..1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,i,j,x\n0,1,1,1\n"));
    }

    #[test]
    fn distance_average_is_reported() {
        let spec = SystemSpec::two_speed_reference(10, 0.7).unwrap();
        let reference = TailMeasure::new(2, vec![vec![1.0], vec![0.4]]).unwrap();
        let cfg = SimConfig::new(spec, PolicyId::SaJsq).arrivals(20_000).distance_to(reference);
        let d = simulate_separate(&cfg).unwrap().mean_distance.unwrap();
        assert!(d.mean > 0.0 && d.mean < 2.0);
        assert!(d.std_err > 0.0);
    }
}
