//! Lyapunov drifts, Chernoff-type tail bounds and the tightness statistic.
//!
//! Drifts are evaluated from the transition rates of the current state on
//! every call; nothing is cached.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, QueueView, SystemSpec, TailMeasure};
use crate::stats::{batch_means, Estimate};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("theta {theta} outside (0, {limit})")]
    ThetaOutOfRange { theta: f64, limit: f64 },
    #[error("no samples with positive dwell time")]
    EmptySample,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `-ln(lambda)`, the supremum of admissible exponents.
pub fn theta_limit(lambda: f64) -> f64 {
    -lambda.ln()
}

pub fn check_theta(theta: f64, lambda: f64) -> Result<f64, BoundsError> {
    let limit = theta_limit(lambda);
    if theta > 0.0 && theta < limit {
        Ok(theta)
    } else {
        Err(BoundsError::ThetaOutOfRange { theta, limit })
    }
}

/// `{0.1, 0.25, 0.5, 0.9 * (-ln lambda)}` restricted to admissible values.
pub fn default_theta_grid(lambda: f64) -> Vec<f64> {
    let limit = theta_limit(lambda);
    let mut g: Vec<f64> = [0.1, 0.25, 0.5, 0.9 * limit].into_iter().filter(|&t| t > 0.0 && t < limit).collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

struct Rates {
    n_lambda: f64,
    q_min: u32,
    /// `sum_j mu_j sum_k f(Q_kj)` over all servers.
    weighted: f64,
    /// `sum_j mu_j I_j`.
    idle: f64,
    /// `sum_j mu_j B_j`.
    busy: f64,
}

fn rates<V: QueueView + ?Sized>(q: &V, spec: &SystemSpec, f: impl Fn(u32) -> f64) -> Rates {
    let mut r = Rates { n_lambda: spec.arrival_rate(), q_min: q.global_min(), weighted: 0.0, idle: 0.0, busy: 0.0 };
    for j in 0..q.num_pools() {
        let mu = spec.speed(j);
        for k in 0..q.pool_size(j) {
            let len = q.queue(j, k);
            r.weighted += mu * f(len);
            if len == 0 {
                r.idle += mu;
            } else {
                r.busy += mu;
            }
        }
    }
    r
}

/// Generator drift of `sum Q^2` when arrivals join a globally shortest queue.
pub fn phi_drift<V: QueueView + ?Sized>(q: &V, spec: &SystemSpec) -> f64 {
    let r = rates(q, spec, f64::from);
    2.0 * r.n_lambda * f64::from(r.q_min) - 2.0 * r.weighted + r.n_lambda + r.busy
}

/// Generator drift of `sum exp(theta Q)`.
pub fn psi_drift<V: QueueView + ?Sized>(q: &V, theta: f64, spec: &SystemSpec) -> f64 {
    let r = rates(q, spec, |l| (theta * f64::from(l)).exp());
    let back = (-theta).exp();
    theta.exp_m1() * (r.n_lambda * (theta * f64::from(r.q_min)).exp() - back * r.weighted + back * r.idle)
}

/// Majorant of [`psi_drift`] that drops the dependence on the shortest queue.
pub fn psi_drift_upper_bound<V: QueueView + ?Sized>(q: &V, theta: f64, spec: &SystemSpec) -> f64 {
    let r = rates(q, spec, |l| (theta * f64::from(l)).exp());
    -(-theta).exp_m1() * ((spec.lambda() * theta.exp() - 1.0) * r.weighted + r.idle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    /// `C_j e^{-l theta}`.
    pub bound: f64,
    /// `C_j`, which also bounds `E[exp(theta Q)]` for a pool-`j` server.
    pub mgf_bound: f64,
}

/// Bound on the stationary probability that a pool-`pool` queue holds at
/// least `level` jobs, uniform in `N`.
pub fn tail_bound(level: u32, theta: f64, pool: usize, spec: &SystemSpec) -> Result<TailBound, BoundsError> {
    let lambda = spec.lambda();
    check_theta(theta, lambda)?;
    let c = (1.0 - lambda) / (spec.speed(pool) * spec.fraction(pool) * (1.0 - lambda * theta.exp()));
    Ok(TailBound { bound: c * (-f64::from(level) * theta).exp(), mgf_bound: c })
}

/// `C(theta) e^{-l theta}`, the majorant of the tail sums `sum_{i >= l} x_ij`.
pub fn tail_sum_bound(level: u32, theta: f64, spec: &SystemSpec) -> Result<f64, BoundsError> {
    let lambda = spec.lambda();
    check_theta(theta, lambda)?;
    let inv: f64 = spec.pools().iter().map(|p| 1.0 / (p.speed * p.fraction)).sum();
    let c = (1.0 - lambda) / ((1.0 - lambda * theta.exp()) * -(-theta).exp_m1()) * inv;
    Ok(c * (-f64::from(level) * theta).exp())
}

/// `max_j sum_{i >= level} x[i][j]`.
pub fn tightness_statistic(x: &TailMeasure, level: usize) -> f64 {
    (0..x.num_pools())
        .map(|j| (level..=x.depth()).map(|i| x.get(i, j)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dwell-weighted average of a state functional with batch-means error.
#[derive(Debug, Clone, Default)]
pub struct DriftAccumulator {
    samples: Vec<(f64, f64)>,
}

impl DriftAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64, dwell: f64) {
        self.samples.push((value, dwell));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Overall weighted mean; the error comes from `batches` contiguous groups
    /// of equal sample count.
    pub fn finish(&self, batches: usize) -> Result<Estimate, BoundsError> {
        let total: f64 = self.samples.iter().map(|s| s.1).sum();
        if !(total > 0.0) {
            return Err(BoundsError::EmptySample);
        }
        let mean = self.samples.iter().map(|(v, w)| v * w).sum::<f64>() / total;
        let size = self.samples.len() / batches.max(1);
        let groups: Vec<f64> = if size == 0 {
            Vec::new()
        } else {
            self.samples
                .chunks_exact(size)
                .filter_map(|c| {
                    let w: f64 = c.iter().map(|s| s.1).sum();
                    (w > 0.0).then(|| c.iter().map(|(v, d)| v * d).sum::<f64>() / w)
                })
                .collect()
        };
        let mut e = batch_means(&groups);
        e.mean = mean;
        Ok(e)
    }
}

/// Dwell-weighted stationary average of [`psi_drift`] over `(state, dwell)`
/// samples from a post-warmup run.
pub fn stationary_drift_estimate<'a, V: QueueView + 'a>(
    samples: impl IntoIterator<Item = (&'a V, f64)>,
    theta: f64,
    spec: &SystemSpec,
    batches: usize,
) -> Result<Estimate, BoundsError> {
    let mut acc = DriftAccumulator::new();
    for (q, dwell) in samples {
        acc.push(psi_drift(q, theta, spec), dwell);
    }
    acc.finish(batches)
}

/// One line of a tail-bound comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBoundRow {
    pub l: u32,
    pub theta: f64,
    /// One-based pool.
    pub j: usize,
    pub empirical: f64,
    pub bound: f64,
}

pub fn write_tail_bound_csv<W: Write>(rows: &[TailBoundRow], out: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
