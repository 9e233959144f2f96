//! Dispatch rules. Each maps a queue state and a random source to a server.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{QueueView, SystemSpec};

/// Relative tolerance under which two SED ratios count as tied.
pub const SED_TIE_TOLERANCE: f64 = 1e-12;

/// Zero-based destination `(pool, server)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub pool: usize,
    pub server: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyId {
    SaJsq,
    Jsq,
    Sed,
    SqD(usize),
    SqPerPool(Vec<usize>),
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("sample size {d} is outside [1, {max}]")]
    DOutOfRange { d: usize, max: usize },
    #[error("per-pool sample sizes {d:?} do not fit pool sizes {sizes:?}")]
    PerPoolOutOfRange { d: Vec<usize>, sizes: Vec<usize> },
    #[error("every server is busy")]
    NoIdleServer,
    #[error("unknown policy `{0}` (expected sa-jsq, jsq, sed, sq:d=<d> or sq2:<d1>,<d2>,...)")]
    Parse(String),
}

impl PolicyId {
    /// Checks the sampling parameters against a farm.
    pub fn validate(&self, spec: &SystemSpec) -> Result<(), PolicyError> {
        match self {
            PolicyId::SqD(d) if *d == 0 || *d > spec.n_servers() => {
                Err(PolicyError::DOutOfRange { d: *d, max: spec.n_servers() })
            }
            PolicyId::SqPerPool(d)
                if d.len() != spec.num_pools()
                    || d.iter().all(|&x| x == 0)
                    || d.iter().zip(spec.pool_sizes()).any(|(&x, &n)| x > n) =>
            {
                Err(PolicyError::PerPoolOutOfRange { d: d.clone(), sizes: spec.pool_sizes().to_vec() })
            }
            _ => Ok(()),
        }
    }

    /// Short label used in file names and CSV columns.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyId::SaJsq => write!(f, "sa-jsq"),
            PolicyId::Jsq => write!(f, "jsq"),
            PolicyId::Sed => write!(f, "sed"),
            PolicyId::SqD(d) => write!(f, "sq:d={d}"),
            PolicyId::SqPerPool(d) => {
                let parts: Vec<String> = d.iter().map(usize::to_string).collect();
                write!(f, "sq2:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for PolicyId {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let bad = || PolicyError::Parse(s.to_string());
        match t.as_str() {
            "sa-jsq" | "sajsq" => return Ok(PolicyId::SaJsq),
            "jsq" => return Ok(PolicyId::Jsq),
            "sed" => return Ok(PolicyId::Sed),
            _ => {}
        }
        if let Some(rest) = t.strip_prefix("sq:") {
            let d = rest.strip_prefix("d=").unwrap_or(rest);
            let d: usize = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(PolicyError::DOutOfRange { d, max: usize::MAX });
            }
            return Ok(PolicyId::SqD(d));
        }
        if let Some(rest) = t.strip_prefix("sq2:") {
            let d = rest
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            if d.iter().all(|&x| x == 0) {
                return Err(bad());
            }
            return Ok(PolicyId::SqPerPool(d));
        }
        Err(bad())
    }
}

/// Uniform pick among the servers of `pool` holding exactly `len` jobs.
fn uniform_at<V: QueueView + ?Sized, R: Rng + ?Sized>(q: &V, pool: usize, len: u32, rng: &mut R) -> DispatchDecision {
    let count = q.count_at(pool, len);
    debug_assert!(count > 0);
    DispatchDecision { pool, server: q.nth_at(pool, len, rng.random_range(0..count)) }
}

/// Speed-aware JSQ: a globally shortest queue, ties to the fastest pool, then
/// uniform within it.
pub fn sa_jsq_select<V: QueueView + ?Sized, R: Rng + ?Sized>(q: &V, rng: &mut R) -> DispatchDecision {
    let pool = q.fastest_min_pool();
    uniform_at(q, pool, q.pool_min(pool), rng)
}

/// Classical JSQ: uniform over every globally shortest queue.
pub fn jsq_select<V: QueueView + ?Sized, R: Rng + ?Sized>(q: &V, rng: &mut R) -> DispatchDecision {
    let m = q.global_min();
    let total: usize = (0..q.num_pools()).map(|j| q.count_at(j, m)).sum();
    let mut u = rng.random_range(0..total);
    for pool in 0..q.num_pools() {
        let c = q.count_at(pool, m);
        if u < c {
            return DispatchDecision { pool, server: q.nth_at(pool, m, u) };
        }
        u -= c;
    }
    unreachable!("index below the total count of minimal servers")
}

/// Shortest expected delay: minimise `queue / speed`; ties to the fastest pool,
/// then uniform.
pub fn sed_select<V: QueueView + ?Sized, R: Rng + ?Sized>(q: &V, spec: &SystemSpec, rng: &mut R) -> DispatchDecision {
    let ratio = |j: usize| f64::from(q.pool_min(j)) / spec.speed(j);
    let best = (0..q.num_pools()).map(ratio).fold(f64::INFINITY, f64::min);
    let pool = (0..q.num_pools())
        .find(|&j| ratio(j) <= best + SED_TIE_TOLERANCE * best.abs())
        .expect("some pool attains the minimum");
    uniform_at(q, pool, q.pool_min(pool), rng)
}

/// Picks among sampled servers: shortest queue, then fastest pool, then
/// uniform over the remaining ties (reservoir sampling).
fn best_of_sample<V, R, I>(q: &V, sample: I, rng: &mut R) -> DispatchDecision
where
    V: QueueView + ?Sized,
    R: Rng + ?Sized,
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut best: Option<(u32, usize, usize)> = None;
    let mut ties = 0u32;
    for (pool, server) in sample {
        let key = (q.queue(pool, server), pool);
        match best {
            Some((len, bp, _)) if (len, bp) < key => {}
            Some((len, bp, _)) if (len, bp) == key => {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    best = Some((key.0, pool, server));
                }
            }
            _ => {
                best = Some((key.0, pool, server));
                ties = 1;
            }
        }
    }
    let (_, pool, server) = best.expect("non-empty sample");
    DispatchDecision { pool, server }
}

/// SQ(d): shortest of `d` servers sampled without replacement from the whole farm.
pub fn sq_d_select<V: QueueView + ?Sized, R: Rng + ?Sized>(
    q: &V,
    d: usize,
    rng: &mut R,
) -> Result<DispatchDecision, PolicyError> {
    let sizes: Vec<usize> = (0..q.num_pools()).map(|j| q.pool_size(j)).collect();
    let n: usize = sizes.iter().sum();
    if d == 0 || d > n {
        return Err(PolicyError::DOutOfRange { d, max: n });
    }
    let picked = index::sample(rng, n, d);
    let located: Vec<(usize, usize)> = picked
        .iter()
        .map(|mut g| {
            let mut pool = 0;
            while g >= sizes[pool] {
                g -= sizes[pool];
                pool += 1;
            }
            (pool, g)
        })
        .collect();
    Ok(best_of_sample(q, located, rng))
}

/// SQ(d_1, ..., d_M): `d[j]` servers sampled without replacement from pool `j`.
pub fn sq_d1_d2_select<V: QueueView + ?Sized, R: Rng + ?Sized>(
    q: &V,
    d: &[usize],
    rng: &mut R,
) -> Result<DispatchDecision, PolicyError> {
    let sizes: Vec<usize> = (0..q.num_pools()).map(|j| q.pool_size(j)).collect();
    if d.len() != sizes.len() || d.iter().all(|&x| x == 0) || d.iter().zip(&sizes).any(|(&x, &n)| x > n) {
        return Err(PolicyError::PerPoolOutOfRange { d: d.to_vec(), sizes });
    }
    let mut located = Vec::with_capacity(d.iter().sum());
    for (pool, (&dj, &nj)) in d.iter().zip(&sizes).enumerate() {
        if dj > 0 {
            located.extend(index::sample(rng, nj, dj).iter().map(|k| (pool, k)));
        }
    }
    Ok(best_of_sample(q, located, rng))
}

/// JFFS for the pooled system: the fastest pool with an idle server.
pub fn jffs_select(busy: &[usize], spec: &SystemSpec) -> Result<usize, PolicyError> {
    (0..spec.num_pools()).find(|&j| busy[j] < spec.pool_size(j)).ok_or(PolicyError::NoIdleServer)
}

/// Dispatches one arrival under `policy`.
pub fn dispatch<V: QueueView + ?Sized, R: Rng + ?Sized>(
    policy: &PolicyId,
    q: &V,
    spec: &SystemSpec,
    rng: &mut R,
) -> Result<DispatchDecision, PolicyError> {
    Ok(match policy {
        PolicyId::SaJsq => sa_jsq_select(q, rng),
        PolicyId::Jsq => jsq_select(q, rng),
        PolicyId::Sed => sed_select(q, spec, rng),
        PolicyId::SqD(d) => sq_d_select(q, *d, rng)?,
        PolicyId::SqPerPool(d) => sq_d1_d2_select(q, d, rng)?,
    })
}
