//! Small statistical toolkit: confidence intervals, batch means and the
//! goodness-of-fit tests used by the verification suites.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Sample mean with its standard error and a two-sided 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Estimate {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// `t` quantile with `df` degrees of freedom; infinite for `df = 0`.
pub fn t_quantile(p: f64, df: usize) -> f64 {
    if df == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, df as f64).expect("valid t parameters").inverse_cdf(p)
}

/// Mean, standard error and 95% t-interval of independent observations.
pub fn mean_ci(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, std_err: f64::NAN, half_width: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { mean, std_err: f64::INFINITY, half_width: f64::INFINITY, n };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std_err = (var / n as f64).sqrt();
    Estimate { mean, std_err, half_width: t_quantile(0.975, n - 1) * std_err, n }
}

/// Batch-means estimate: the batch averages are treated as independent.
pub fn batch_means(batches: &[f64]) -> Estimate {
    mean_ci(batches)
}

/// Groups a stationary series into `batches` contiguous batches and returns
/// the batch averages. The remainder at the end is dropped.
pub fn batch_series(series: &[f64], batches: usize) -> Vec<f64> {
    let len = series.len() / batches.max(1);
    if len == 0 {
        return Vec::new();
    }
    series.chunks_exact(len).take(batches).map(|c| c.iter().sum::<f64>() / len as f64).collect()
}

/// Pearson chi-square goodness-of-fit. Returns `(statistic, p-value)`.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        if p <= 0.0 {
            assert_eq!(o, 0, "observation in a cell of probability zero");
            continue;
        }
        let e = p * total as f64;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return (stat, 1.0);
    }
    let dist = ChiSquared::new((cells - 1) as f64).expect("valid chi-square parameters");
    (stat, 1.0 - dist.cdf(stat))
}

/// Welch's unequal-variance t-test. Returns `(t, two-sided p-value)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let ea = mean_ci(a);
    let eb = mean_ci(b);
    let va = ea.std_err.powi(2);
    let vb = eb.std_err.powi(2);
    let se = (va + vb).sqrt();
    if se == 0.0 {
        return if ea.mean == eb.mean { (0.0, 1.0) } else { (f64::INFINITY, 0.0) };
    }
    let t = (ea.mean - eb.mean) / se;
    let df = (va + vb).powi(2) / (va.powi(2) / (a.len() - 1) as f64 + vb.powi(2) / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t parameters");
    (t, 2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
/// distribution. Returns `(D, p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_survival(lambda))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
