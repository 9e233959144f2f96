use serde::{Deserialize, Serialize};

use super::spec::SPEC_TOLERANCE;
use super::{ModelError, QueueView, SystemSpec};

/// Default truncation depth of tail measures.
pub const DEFAULT_DEPTH: usize = 64;

/// Fractions `x[i][j]` of pool-`j` servers holding at least `i` jobs, for
/// `1 <= i <= depth`. Levels above the depth are zero and level zero is one.
///
/// Stored pool-major: `columns[j][i - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTail", into = "RawTail")]
pub struct TailMeasure {
    depth: usize,
    columns: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawTail {
    depth: usize,
    pools: Vec<Vec<f64>>,
}

impl TryFrom<RawTail> for TailMeasure {
    type Error = ModelError;

    fn try_from(raw: RawTail) -> Result<Self, Self::Error> {
        TailMeasure::new(raw.depth, raw.pools)
    }
}

impl From<TailMeasure> for RawTail {
    fn from(t: TailMeasure) -> Self {
        RawTail { depth: t.depth, pools: t.columns }
    }
}

impl TailMeasure {
    /// Builds a measure from per-pool columns, each of length at most `depth`
    /// (shorter columns are zero-padded). Values must be in `[0, 1]` and
    /// non-increasing in the level.
    pub fn new(depth: usize, mut columns: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if depth == 0 {
            return Err(ModelError::ZeroDepth);
        }
        for (j, col) in columns.iter_mut().enumerate() {
            if col.len() > depth {
                return Err(ModelError::DepthExceeded { pool: j + 1, level: col.len() as u64, depth });
            }
            col.resize(depth, 0.0);
            let mut prev = 1.0;
            for (i, &v) in col.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || v > prev {
                    return Err(ModelError::NotATailMeasure { pool: j + 1, level: i + 1, value: v });
                }
                prev = v;
            }
        }
        Ok(Self { depth, columns })
    }

    /// All-zero measure (empty system).
    pub fn zeros(num_pools: usize, depth: usize) -> Self {
        Self { depth: depth.max(1), columns: vec![vec![0.0; depth.max(1)]; num_pools] }
    }

    /// Builds from a generator `f(i, j)` with one-based level `i`.
    pub fn from_fn(num_pools: usize, depth: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, ModelError> {
        let columns = (0..num_pools).map(|j| (1..=depth).map(|i| f(i, j)).collect()).collect();
        Self::new(depth, columns)
    }

    /// Used by integrators that have already projected onto the valid set.
    pub(crate) fn from_columns_unchecked(depth: usize, columns: Vec<Vec<f64>>) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == depth));
        Self { depth, columns }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_pools(&self) -> usize {
        self.columns.len()
    }

    /// `x[i][j]` with the conventions `x[0][j] = 1` and zero beyond the depth.
    pub fn get(&self, level: usize, pool: usize) -> f64 {
        match level {
            0 => 1.0,
            i if i > self.depth => 0.0,
            i => self.columns[pool][i - 1],
        }
    }

    /// Levels `1..=depth` of one pool.
    pub fn column(&self, pool: usize) -> &[f64] {
        &self.columns[pool]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Same values at a different truncation depth.
    pub fn with_depth(&self, depth: usize) -> Result<Self, ModelError> {
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if let Some(pos) = c.iter().rposition(|&v| v > 0.0) {
                    if pos + 1 > depth {
                        return Err(ModelError::DepthExceeded { pool: j + 1, level: pos as u64 + 1, depth });
                    }
                }
                let mut c = c.clone();
                c.resize(depth, 0.0);
                Ok(c)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(depth, columns)
    }

    /// `max_j sum_i |x[i][j]|`.
    pub fn l1_norm(&self) -> f64 {
        self.columns.iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Whether `N * fraction_j * x[i][j]` is integral for every entry, i.e. the
    /// measure is reachable by an `N`-server system.
    pub fn is_empirical(&self, spec: &SystemSpec) -> bool {
        self.columns.len() == spec.num_pools()
            && self.columns.iter().enumerate().all(|(j, c)| {
                let n = spec.pool_size(j) as f64;
                c.iter().all(|v| ((v * n) - (v * n).round()).abs() <= SPEC_TOLERANCE)
            })
    }

    /// Component-wise `self <= other` up to `tol`.
    pub fn dominated_by(&self, other: &TailMeasure, tol: f64) -> bool {
        let depth = self.depth.max(other.depth);
        self.columns.len() == other.columns.len()
            && (0..self.columns.len()).all(|j| (1..=depth).all(|i| self.get(i, j) <= other.get(i, j) + tol))
    }
}

/// Empirical tail measure of a queue-length state.
pub fn tail_measure_from_queues<V: QueueView + ?Sized>(
    q: &V,
    spec: &SystemSpec,
    depth: usize,
) -> Result<TailMeasure, ModelError> {
    if q.num_pools() != spec.num_pools() {
        return Err(ModelError::PoolCountMismatch { left: q.num_pools(), right: spec.num_pools() });
    }
    if depth == 0 {
        return Err(ModelError::ZeroDepth);
    }
    let mut columns = Vec::with_capacity(spec.num_pools());
    for j in 0..spec.num_pools() {
        let size = q.pool_size(j);
        if size != spec.pool_size(j) {
            return Err(ModelError::PoolSizeMismatch { pool: j + 1, expected: spec.pool_size(j), found: size });
        }
        // counts[i] = number of servers with exactly i jobs
        let mut counts = vec![0usize; depth + 1];
        for k in 0..size {
            let len = q.queue(j, k) as usize;
            if len > depth {
                return Err(ModelError::DepthExceeded { pool: j + 1, level: len as u64, depth });
            }
            counts[len] += 1;
        }
        let mut col = vec![0.0; depth];
        let mut at_least = 0usize;
        for i in (1..=depth).rev() {
            at_least += counts[i];
            col[i - 1] = at_least as f64 / size as f64;
        }
        columns.push(col);
    }
    Ok(TailMeasure { depth, columns })
}

/// Scaled tail sums `v_n = sum_j fraction_j * sum_{i >= n} x[i][j]` for
/// `n = 1..=depth`. For an empirical measure `v_1` is the number of jobs per
/// server.
pub fn scaled_tail_sums(x: &TailMeasure, spec: &SystemSpec) -> Vec<f64> {
    let mut v = vec![0.0; x.depth()];
    for (j, col) in x.columns().iter().enumerate() {
        let gamma = spec.fraction(j);
        let mut acc = 0.0;
        for i in (0..x.depth()).rev() {
            acc += col[i];
            v[i] += gamma * acc;
        }
    }
    v
}

/// Distances between two tail measures, zero-padding the shallower one.
///
/// Returns `(max_j sum_i |a - b|, sum_{i,j} |a - b|)`.
pub fn l1_distance(a: &TailMeasure, b: &TailMeasure) -> Result<(f64, f64), ModelError> {
    if a.num_pools() != b.num_pools() {
        return Err(ModelError::PoolCountMismatch { left: a.num_pools(), right: b.num_pools() });
    }
    let depth = a.depth().max(b.depth());
    let mut norm: f64 = 0.0;
    let mut sum = 0.0;
    for j in 0..a.num_pools() {
        let col: f64 = (1..=depth).map(|i| (a.get(i, j) - b.get(i, j)).abs()).sum();
        norm = norm.max(col);
        sum += col;
    }
    Ok((norm, sum))
}
