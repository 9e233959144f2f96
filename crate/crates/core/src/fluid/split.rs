use serde::{Deserialize, Serialize};

use super::FluidError;
use crate::model::{SystemSpec, TailMeasure};

/// Values at or above `1 - BOUNDARY_EPS` count as full.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Smallest `i >= 0` with `x[i+1][pool] < 1`: the fluid minimum queue length.
pub fn min_level(x: &TailMeasure, pool: usize) -> usize {
    column_min_level(x.column(pool))
}

pub(crate) fn column_min_level(col: &[f64]) -> usize {
    col.iter().position(|&v| v < 1.0 - BOUNDARY_EPS).unwrap_or(col.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentStatus {
    Stable,
    Saturating,
    Starved,
}

impl ComponentStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Saturating => "saturating",
            Self::Starved => "starved",
        }
    }
}

/// Servers of one pool that sporadically sit one job below a full level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeComponent {
    pub pool: usize,
    /// Queue length `m` of the servers offered arrivals; mass goes to `p[m][pool]`.
    pub level: usize,
    /// Rate at which such servers appear.
    pub nu: f64,
    pub rho: f64,
    pub status: ComponentStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Absorber {
    pub pool: usize,
    pub level: usize,
}

/// Probabilities `p[m][j]` that an arrival joins a pool-`j` server holding `m`
/// jobs, with the cascade that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSplit {
    depth: usize,
    /// `probs[j][m]`, `m = 0..depth`.
    probs: Vec<Vec<f64>>,
    pub min_levels: Vec<usize>,
    pub cascade: Vec<CascadeComponent>,
    pub absorber: Option<Absorber>,
}

impl ArrivalSplit {
    /// `p[level][pool]`; zero outside the truncation.
    pub fn get(&self, level: usize, pool: usize) -> f64 {
        self.probs[pool].get(level).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_pools(&self) -> usize {
        self.probs.len()
    }

    /// Non-zero entries as `(level, pool, p)`.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (j, col) in self.probs.iter().enumerate() {
            for (m, &p) in col.iter().enumerate() {
                if p != 0.0 {
                    out.push((m, j, p));
                }
            }
        }
        out
    }
}

/// Arrival split of the fluid limit at `x`.
pub fn compute_arrival_split(x: &TailMeasure, spec: &SystemSpec) -> Result<ArrivalSplit, FluidError> {
    split_columns(x.columns(), x.depth(), spec)
}

pub(crate) fn split_columns(cols: &[Vec<f64>], depth: usize, spec: &SystemSpec) -> Result<ArrivalSplit, FluidError> {
    let mut buf = SplitBuffers::new(cols.len(), depth);
    let absorber = buf.fill(cols, depth, spec)?;
    let SplitBuffers { probs, levels, cascade } = buf;
    Ok(ArrivalSplit { depth, probs, min_levels: levels, cascade, absorber })
}

/// Reusable storage for repeated split evaluations inside the integrator.
#[derive(Debug, Clone)]
pub(crate) struct SplitBuffers {
    pub(crate) probs: Vec<Vec<f64>>,
    levels: Vec<usize>,
    cascade: Vec<CascadeComponent>,
}

impl SplitBuffers {
    pub(crate) fn new(pools: usize, depth: usize) -> Self {
        Self { probs: vec![vec![0.0; depth]; pools], levels: Vec::with_capacity(pools), cascade: Vec::with_capacity(2 * pools) }
    }

    pub(crate) fn fill(&mut self, cols: &[Vec<f64>], depth: usize, spec: &SystemSpec) -> Result<Option<Absorber>, FluidError> {
        let at = |i: usize, j: usize| -> f64 {
            match i {
                0 => 1.0,
                i if i > depth => 0.0,
                i => cols[j][i - 1],
            }
        };
        let m = cols.len();
        let lambda = spec.lambda();
        self.levels.clear();
        self.levels.extend(cols.iter().map(|c| column_min_level(c)));
        let levels = &self.levels;
        let lmin = *levels.iter().min().expect("at least one pool");
        let jstar = levels.iter().position(|&l| l == lmin).expect("minimum exists");

        let sporadic = |j: usize, top: usize| -> f64 {
            let r = spec.fraction(j) * spec.speed(j) * (at(top, j) - at(top + 1, j));
            r.max(0.0)
        };
        let cascade = &mut self.cascade;
        cascade.clear();
        if lmin >= 1 {
            for j in (0..m).filter(|&j| levels[j] == lmin) {
                let nu = sporadic(j, lmin);
                cascade.push(CascadeComponent { pool: j, level: lmin - 1, nu, rho: nu / lambda, status: ComponentStatus::Starved });
            }
        }
        for k in (0..jstar).filter(|&k| levels[k] == lmin + 1) {
            let nu = sporadic(k, lmin + 1);
            cascade.push(CascadeComponent { pool: k, level: lmin, nu, rho: nu / lambda, status: ComponentStatus::Starved });
        }

        let probs = &mut self.probs;
        for col in probs.iter_mut() {
            col.clear();
            col.resize(depth, 0.0);
        }
        let mut offer = |pool: usize, level: usize, mass: f64| -> Result<(), FluidError> {
            if mass <= 0.0 {
                return Ok(());
            }
            if level >= depth {
                return Err(FluidError::DepthExceeded { pool: pool + 1, level: level + 1, depth });
            }
            probs[pool][level] += mass;
            Ok(())
        };

        let mut carried = 0.0;
        let mut saturated = false;
        for c in cascade.iter_mut() {
            if saturated {
                continue;
            }
            if carried + c.rho < 1.0 {
                c.status = ComponentStatus::Stable;
                carried += c.rho;
                offer(c.pool, c.level, c.rho)?;
            } else {
                c.status = ComponentStatus::Saturating;
                offer(c.pool, c.level, 1.0 - carried)?;
                saturated = true;
            }
        }
        if saturated {
            return Ok(None);
        }
        offer(jstar, lmin, 1.0 - carried)?;
        Ok(Some(Absorber { pool: jstar, level: lmin }))
    }
}
