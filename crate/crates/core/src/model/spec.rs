use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Absolute tolerance for the normalisation and integrality checks.
pub const SPEC_TOLERANCE: f64 = 1e-9;

/// One server type: its service rate and its share of the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub speed: f64,
    pub fraction: f64,
}

impl PoolSpec {
    pub fn new(speed: f64, fraction: f64) -> Self {
        Self { speed, fraction }
    }
}

/// A heterogeneous farm of `n_servers` servers split into pools ordered from
/// fastest to slowest, offered Poisson traffic of total rate `n_servers * lambda`.
///
/// Construct with [`SystemSpec::new`], which enforces every structural
/// invariant. Pool indices are zero-based in code and one-based in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct SystemSpec {
    pools: Vec<PoolSpec>,
    n_servers: usize,
    lambda: f64,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    pools: Vec<PoolSpec>,
    n_servers: usize,
    lambda: f64,
}

impl TryFrom<RawSpec> for SystemSpec {
    type Error = ModelError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        SystemSpec::new(raw.pools, raw.n_servers, raw.lambda)
    }
}

impl From<SystemSpec> for RawSpec {
    fn from(spec: SystemSpec) -> Self {
        RawSpec {
            pools: spec.pools,
            n_servers: spec.n_servers,
            lambda: spec.lambda,
        }
    }
}

impl SystemSpec {
    /// Validates and builds a spec. Checks run in a fixed order and the first
    /// violated invariant is reported.
    pub fn new(pools: Vec<PoolSpec>, n_servers: usize, lambda: f64) -> Result<Self, ModelError> {
        if pools.is_empty() {
            return Err(ModelError::NoPools);
        }
        if n_servers == 0 {
            return Err(ModelError::NoServers);
        }
        for (j, p) in pools.iter().enumerate() {
            if !(p.speed.is_finite() && p.speed > 0.0) {
                return Err(ModelError::InvalidSpeed { pool: j + 1, speed: p.speed });
            }
            if !(p.fraction > 0.0 && p.fraction <= 1.0) {
                return Err(ModelError::InvalidFraction { pool: j + 1, fraction: p.fraction });
            }
        }
        if let Some(j) = pools.windows(2).position(|w| w[0].speed <= w[1].speed) {
            return Err(ModelError::UnsortedSpeeds { pool: j + 2 });
        }
        let total_fraction: f64 = pools.iter().map(|p| p.fraction).sum();
        if (total_fraction - 1.0).abs() > SPEC_TOLERANCE {
            return Err(ModelError::FractionsNotNormalized { sum: total_fraction });
        }
        let capacity: f64 = pools.iter().map(|p| p.speed * p.fraction).sum();
        if (capacity - 1.0).abs() > SPEC_TOLERANCE {
            return Err(ModelError::UnnormalizedCapacity { capacity });
        }
        let mut sizes = Vec::with_capacity(pools.len());
        for (j, p) in pools.iter().enumerate() {
            let exact = n_servers as f64 * p.fraction;
            let rounded = exact.round();
            if (exact - rounded).abs() > SPEC_TOLERANCE || rounded < 1.0 {
                return Err(ModelError::NonIntegerPoolSize { pool: j + 1, size: exact });
            }
            sizes.push(rounded as usize);
        }
        if sizes.iter().sum::<usize>() != n_servers {
            return Err(ModelError::NonIntegerPoolSize {
                pool: pools.len(),
                size: n_servers as f64 * pools[pools.len() - 1].fraction,
            });
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ModelError::LambdaOutOfRange { lambda });
        }
        let offsets = sizes
            .iter()
            .scan(0usize, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect();
        Ok(Self { pools, n_servers, lambda, sizes, offsets })
    }

    /// Convenience constructor from parallel speed and fraction slices.
    pub fn from_rates(speeds: &[f64], fractions: &[f64], n_servers: usize, lambda: f64) -> Result<Self, ModelError> {
        if speeds.len() != fractions.len() {
            return Err(ModelError::PoolCountMismatch { left: speeds.len(), right: fractions.len() });
        }
        let pools = speeds.iter().zip(fractions).map(|(&s, &f)| PoolSpec::new(s, f)).collect();
        Self::new(pools, n_servers, lambda)
    }

    /// The two-pool farm used throughout the experiments:
    /// a fifth of the servers run four times faster than the rest.
    pub fn two_speed_reference(n_servers: usize, lambda: f64) -> Result<Self, ModelError> {
        Self::from_rates(&[2.5, 0.625], &[0.2, 0.8], n_servers, lambda)
    }

    /// Half the servers run twice as fast as the other half.
    pub fn half_split_reference(n_servers: usize, lambda: f64) -> Result<Self, ModelError> {
        Self::from_rates(&[4.0 / 3.0, 2.0 / 3.0], &[0.5, 0.5], n_servers, lambda)
    }

    /// A random valid farm with `1..=max_pools` pools of `n_servers` servers in
    /// total and load drawn from `lambda_range`. Raw speeds are drawn from
    /// `[0.2, 5)` and rescaled to unit capacity.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        max_pools: usize,
        n_servers: usize,
        lambda_range: std::ops::Range<f64>,
    ) -> Result<Self, ModelError> {
        let m = rng.random_range(1..=max_pools.min(n_servers).max(1));
        // composition of n_servers into m positive parts
        let mut cuts: Vec<usize> = rand::seq::index::sample(rng, n_servers - 1, m - 1).into_iter().map(|c| c + 1).collect();
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(n_servers);
        let fractions: Vec<f64> = cuts.windows(2).map(|w| (w[1] - w[0]) as f64 / n_servers as f64).collect();
        let mut raw: Vec<f64> = Vec::with_capacity(m);
        while raw.len() < m {
            let r = rng.random_range(0.2..5.0);
            if raw.iter().all(|&v: &f64| (v - r).abs() > 1e-3) {
                raw.push(r);
            }
        }
        raw.sort_by(|a, b| b.total_cmp(a));
        let capacity: f64 = raw.iter().zip(&fractions).map(|(r, g)| r * g).sum();
        let speeds: Vec<f64> = raw.iter().map(|r| r / capacity).collect();
        Self::from_rates(&speeds, &fractions, n_servers, rng.random_range(lambda_range))
    }

    /// Same pools and size, different load.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, ModelError> {
        Self::new(self.pools.clone(), self.n_servers, lambda)
    }

    /// Same pools and load, different size.
    pub fn with_servers(&self, n_servers: usize) -> Result<Self, ModelError> {
        Self::new(self.pools.clone(), n_servers, self.lambda)
    }

    pub fn pools(&self) -> &[PoolSpec] {
        &self.pools
    }

    pub fn num_pools(&self) -> usize {
        self.pools.len()
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn speed(&self, pool: usize) -> f64 {
        self.pools[pool].speed
    }

    pub fn fraction(&self, pool: usize) -> f64 {
        self.pools[pool].fraction
    }

    /// Number of servers in `pool`.
    pub fn pool_size(&self, pool: usize) -> usize {
        self.sizes[pool]
    }

    pub fn pool_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Index of the first server of `pool` in a flat, pool-major numbering.
    pub fn pool_offset(&self, pool: usize) -> usize {
        self.offsets[pool]
    }

    /// Total arrival rate `N * lambda`.
    pub fn arrival_rate(&self) -> f64 {
        self.n_servers as f64 * self.lambda
    }

    /// Maps a flat server index back to `(pool, server)`.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let pool = match self.offsets.binary_search(&global) {
            Ok(j) => j,
            Err(j) => j - 1,
        };
        (pool, global - self.offsets[pool])
    }
}

/// Checks a spec that may have been assembled by hand (for instance after
/// deserialisation through a path that bypassed [`SystemSpec::new`]).
pub fn validate_spec(spec: SystemSpec) -> Result<SystemSpec, ModelError> {
    SystemSpec::new(spec.pools, spec.n_servers, spec.lambda)
}
