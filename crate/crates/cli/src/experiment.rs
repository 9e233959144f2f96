//! Runs one configured experiment and writes its CSVs and manifest.
//!
//! Work is grouped by `(lambda, N)`. Each group runs in parallel, is sorted
//! back into a fixed order and appended to its CSV before the next group
//! starts, so an interrupted run keeps every finished group and a repeated run
//! writes identical bytes.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use hetlb::bounds::{check_theta, default_theta_grid, tail_bound};
use hetlb::coupling::{coupled_dominance_with, coupled_mmn_with, coupled_monotonicity_with, RunOptions, UnequalSteps};
use hetlb::desim::{simulate_separate, simulate_trajectory};
use hetlb::fluid::{fixed_point, integrate_fluid, pooled_fixed_point};
use hetlb::rng::replication_seed;
use hetlb::stats::mean_ci;
use hetlb::{
    l1_distance, BoundsError, CouplingError, CouplingReport, FluidError, ModelError, PolicyId, QueueState, SimConfig,
    SimError, SystemSpec, TailMeasure,
};

use crate::config::{ExperimentConfig, Kind};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("could not start worker pool: {0}")]
    Workers(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    /// Parent directory; each experiment writes into `<out>/<section name>`.
    pub out: PathBuf,
    /// Zero means one worker per core.
    pub workers: usize,
    pub seed_base: u64,
    /// Hex digest of the configuration file as read.
    pub config_sha256: String,
    pub quiet: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub replication: u64,
    pub seed: u64,
    pub n: usize,
    pub lambda: f64,
    pub policy: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub kind: Kind,
    pub config_sha256: String,
    /// Digest of the resolved experiment, defaults included.
    pub experiment_sha256: String,
    pub seed_base: u64,
    pub resolved: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub files: Vec<FileRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub name: String,
    pub kind: Kind,
    pub dir: PathBuf,
    pub files: Vec<FileRecord>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentSummary {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Table {
    name: String,
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
    rows: usize,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, RunError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header)?;
        Ok(Self { name: name.to_string(), path, writer, rows: 0 })
    }

    fn push(&mut self, row: Vec<String>) -> Result<(), RunError> {
        self.writer.write_record(&row)?;
        self.rows += 1;
        Ok(())
    }

    /// Makes the finished group durable.
    fn flush(&mut self) -> Result<(), RunError> {
        self.writer.flush().map_err(io_err(&self.path))
    }

    fn finish(mut self) -> Result<FileRecord, RunError> {
        self.flush()?;
        drop(self.writer);
        let bytes = fs::read(&self.path).map_err(io_err(&self.path))?;
        Ok(FileRecord { name: self.name, rows: self.rows, sha256: sha256_hex(&bytes) })
    }
}

/// `seed, n, lambda, policy` prefix shared by every row. Deterministic rows
/// leave `seed` empty.
fn key(seed: Option<u64>, n: usize, lambda: f64, policy: &str) -> Vec<String> {
    vec![seed.map(|s| s.to_string()).unwrap_or_default(), n.to_string(), lambda.to_string(), policy.to_string()]
}

const KEY: [&str; 4] = ["seed", "n", "lambda", "policy"];

fn header(rest: &[&'static str]) -> Vec<&'static str> {
    KEY.iter().chain(rest).copied().collect()
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    seeds: Vec<u64>,
    runs: Vec<RunRecord>,
    files: Vec<FileRecord>,
    verdicts: Vec<Verdict>,
    quiet: bool,
}

impl Ctx<'_> {
    fn spec(&self, n: usize, lambda: f64) -> Result<SystemSpec, ModelError> {
        SystemSpec::from_rates(&self.cfg.speeds, &self.cfg.fractions, n, lambda)
    }

    fn record(&mut self, n: usize, lambda: f64, policy: &str) {
        for (r, &seed) in self.seeds.iter().enumerate() {
            self.runs.push(RunRecord { replication: r as u64, seed, n, lambda, policy: policy.to_string() });
        }
    }

    fn say(&self, line: String) {
        if !self.quiet {
            println!("{line}");
        }
    }

    fn verdict(&mut self, label: String, pass: bool, detail: String) {
        self.say(format!("{} {label}: {detail}", if pass { "PASS" } else { "FAIL" }));
        self.verdicts.push(Verdict { label, pass, detail });
    }

    fn grid(&self) -> Vec<(f64, usize)> {
        self.cfg.lambdas.iter().flat_map(|&l| self.cfg.ns.iter().map(move |&n| (l, n))).collect()
    }
}

/// Runs `cfg` into `<settings.out>/<cfg.name>`.
pub fn run_experiment(cfg: &ExperimentConfig, settings: &RunSettings) -> Result<ExperimentSummary, RunError> {
    let dir = settings.out.join(&cfg.name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let seeds = (0..cfg.seeds).map(|r| replication_seed(settings.seed_base, r)).collect();
    let mut ctx = Ctx { cfg, dir, seeds, runs: Vec::new(), files: Vec::new(), verdicts: Vec::new(), quiet: settings.quiet };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| RunError::Workers(e.to_string()))?;
    pool.install(|| match cfg.kind {
        Kind::Fig1 | Kind::Fig2 | Kind::Fig3a => response_times(&mut ctx),
        Kind::Fig3b => distances(&mut ctx),
        Kind::FixedPoint => fixed_points(&mut ctx),
        Kind::FluidTrace => fluid_trace(&mut ctx),
        Kind::CouplingCheck => coupling_check(&mut ctx),
        Kind::BoundsCheck => bounds_check(&mut ctx),
    })?;

    let resolved_json = serde_json::to_vec(cfg)?;
    let manifest = Manifest {
        tool: "hetlb",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.name.clone(),
        kind: cfg.kind,
        config_sha256: settings.config_sha256.clone(),
        experiment_sha256: sha256_hex(&resolved_json),
        seed_base: settings.seed_base,
        resolved: cfg.clone(),
        runs: std::mem::take(&mut ctx.runs),
        files: ctx.files.clone(),
    };
    let path = ctx.dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_err(&path))?;
    if !ctx.verdicts.is_empty() {
        let path = ctx.dir.join("verdicts.json");
        fs::write(&path, serde_json::to_string_pretty(&ctx.verdicts)? + "\n").map_err(io_err(&path))?;
    }
    Ok(ExperimentSummary { name: cfg.name.clone(), kind: cfg.kind, dir: ctx.dir, files: ctx.files, verdicts: ctx.verdicts })
}

#[derive(Serialize)]
struct MeanRow {
    n: usize,
    lambda: f64,
    policy: String,
    mean: f64,
    half_width: f64,
    seeds: usize,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n").map_err(io_err(&path))
}

fn response_times(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let mut table = Table::create(
        &ctx.dir,
        "runs.csv",
        &header(&["mrt", "mrt_se", "mean_jobs_scaled", "completed_jobs", "censored_jobs", "events", "sim_time"]),
    )?;
    let mut means = Vec::new();
    for (lambda, n) in ctx.grid() {
        let spec = ctx.spec(n, lambda)?;
        let jobs: Vec<(usize, usize)> =
            (0..cfg.policies.len()).flat_map(|p| (0..ctx.seeds.len()).map(move |r| (p, r))).collect();
        let results = jobs
            .par_iter()
            .map(|&(p, r)| {
                let sim = SimConfig::new(spec.clone(), cfg.policies[p].clone())
                    .arrivals(cfg.arrivals)
                    .warmup(cfg.warmup)
                    .tail_depth(cfg.tail_depth)
                    .seed(ctx.seeds[r]);
                simulate_separate(&sim)
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (p, policy) in cfg.policies.iter().enumerate() {
            let label = policy.label();
            let runs = &results[p * ctx.seeds.len()..(p + 1) * ctx.seeds.len()];
            for m in runs {
                let mut row = key(Some(m.seed), n, lambda, &label);
                row.extend([
                    m.mean_response_time.to_string(),
                    m.response_time_se.to_string(),
                    m.mean_jobs_scaled.to_string(),
                    m.completed_jobs.to_string(),
                    m.censored_jobs.to_string(),
                    m.event_count.to_string(),
                    m.sim_time.to_string(),
                ]);
                table.push(row)?;
            }
            let e = mean_ci(&runs.iter().map(|m| m.mean_response_time).collect::<Vec<_>>());
            ctx.say(format!("n={n} lambda={lambda} {label}: MRT {:.4} +- {:.4}", e.mean, e.half_width));
            means.push(MeanRow { n, lambda, policy: label.clone(), mean: e.mean, half_width: e.half_width, seeds: runs.len() });
            ctx.record(n, lambda, &label);
        }
        table.flush()?;
    }
    ctx.files.push(table.finish()?);
    write_json(&ctx.dir, "summary.json", &means)
}

fn distances(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let mut table = Table::create(&ctx.dir, "runs.csv", &header(&["distance", "distance_se", "mrt"]))?;
    let mut means = Vec::new();
    for (lambda, n) in ctx.grid() {
        let spec = ctx.spec(n, lambda)?;
        let star = fixed_point(&spec);
        for policy in &cfg.policies {
            let label = policy.label();
            let runs = ctx
                .seeds
                .par_iter()
                .map(|&s| {
                    let sim = SimConfig::new(spec.clone(), policy.clone())
                        .arrivals(cfg.arrivals)
                        .warmup(cfg.warmup)
                        .tail_depth(cfg.tail_depth)
                        .seed(s)
                        .distance_to(star.clone());
                    simulate_separate(&sim)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut d = Vec::new();
            for m in &runs {
                let e = m.mean_distance.expect("reference was set");
                d.push(e.mean);
                let mut row = key(Some(m.seed), n, lambda, &label);
                row.extend([e.mean.to_string(), e.std_err.to_string(), m.mean_response_time.to_string()]);
                table.push(row)?;
            }
            let e = mean_ci(&d);
            ctx.say(format!("n={n} lambda={lambda} {label}: E[d] {:.4} +- {:.4}", e.mean, e.half_width));
            means.push(MeanRow { n, lambda, policy: label.clone(), mean: e.mean, half_width: e.half_width, seeds: d.len() });
            ctx.record(n, lambda, &label);
        }
        table.flush()?;
    }
    ctx.files.push(table.finish()?);
    write_json(&ctx.dir, "summary.json", &means)
}

fn fixed_points(ctx: &mut Ctx) -> Result<(), RunError> {
    let mut table = Table::create(&ctx.dir, "fixed_point.csv", &header(&["j", "x1", "z_star"]))?;
    let n = ctx.cfg.ns[0];
    for &lambda in &ctx.cfg.lambdas {
        let spec = ctx.spec(n, lambda)?;
        let x = fixed_point(&spec);
        let z = pooled_fixed_point(&spec);
        for j in 0..spec.num_pools() {
            let mut row = key(None, n, lambda, "sa-jsq");
            row.extend([(j + 1).to_string(), x.get(1, j).to_string(), z.to_string()]);
            table.push(row)?;
        }
        let cols: Vec<String> = (0..spec.num_pools()).map(|j| format!("x1{}={:.4}", j + 1, x.get(1, j))).collect();
        ctx.say(format!("lambda={lambda}: {} z*={z:.4}", cols.join(" ")));
    }
    ctx.files.push(table.finish()?);
    Ok(())
}

fn push_measure(table: &mut Table, prefix: &[String], t: f64, x: &TailMeasure) -> Result<(), RunError> {
    // rows above the highest occupied level are implied zeros
    let top = (1..=x.depth()).rev().find(|&i| (0..x.num_pools()).any(|j| x.get(i, j) > 0.0)).unwrap_or(1);
    for j in 0..x.num_pools() {
        for i in 1..=top {
            let mut row = prefix.to_vec();
            row.extend([t.to_string(), i.to_string(), (j + 1).to_string(), x.get(i, j).to_string()]);
            table.push(row)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceSummary {
    n: usize,
    lambda: f64,
    policy: String,
    sup_distance: f64,
    at_time: f64,
}

fn fluid_trace(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let mut table = Table::create(&ctx.dir, "trajectory.csv", &header(&["source", "t", "i", "j", "x"]))?;
    let mut summary = Vec::new();
    for &lambda in &cfg.lambdas {
        let base = ctx.spec(cfg.ns[0], lambda)?;
        let init = QueueState::per_pool(&base, &cfg.initial)?;
        let x0 = init.tail_measure(&base, cfg.tail_depth)?;
        let fluid = integrate_fluid(&x0, &base, cfg.t_end, cfg.dt, cfg.sample_every)?;
        // the limit has no N; its rows leave `n` empty
        let mut prefix = key(None, 0, lambda, "sa-jsq");
        prefix[1].clear();
        prefix.push("fluid".into());
        for (t, x) in &fluid {
            push_measure(&mut table, &prefix, *t, x)?;
        }
        for &n in &cfg.ns {
            let spec = ctx.spec(n, lambda)?;
            let init = QueueState::per_pool(&spec, &cfg.initial)?;
            for policy in &cfg.policies {
                let label = policy.label();
                let paths = ctx
                    .seeds
                    .par_iter()
                    .map(|&s| simulate_trajectory(&spec, policy, &init, cfg.t_end, cfg.sample_every, s, cfg.tail_depth))
                    .collect::<Result<Vec<_>, _>>()?;
                for (path, &s) in paths.iter().zip(&ctx.seeds) {
                    for (t, x) in path {
                        let mut prefix = key(Some(s), n, lambda, &label);
                        prefix.push("sim".into());
                        push_measure(&mut table, &prefix, *t, x)?;
                    }
                }
                let (mut sup, mut at) = (0.0f64, 0.0);
                let k = paths.iter().map(Vec::len).min().unwrap_or(0).min(fluid.len());
                for step in 0..k {
                    let d = paths.iter().map(|p| p[step].1.depth()).max().unwrap_or(1);
                    let avg = TailMeasure::from_fn(spec.num_pools(), d, |i, j| {
                        paths.iter().map(|p| p[step].1.get(i, j)).sum::<f64>() / paths.len() as f64
                    })?;
                    let dist = l1_distance(&avg, &fluid[step].1)?.1;
                    if dist > sup {
                        (sup, at) = (dist, fluid[step].0);
                    }
                }
                ctx.say(format!("n={n} lambda={lambda} {label}: sup distance to fluid {sup:.4} at t={at}"));
                summary.push(TraceSummary { n, lambda, policy: label.clone(), sup_distance: sup, at_time: at });
                ctx.record(n, lambda, &label);
            }
            table.flush()?;
        }
    }
    ctx.files.push(table.finish()?);
    write_json(&ctx.dir, "summary.json", &summary)
}

pub struct CouplingRun {
    pub coupling: String,
    /// Policy of the farm being bounded; `jffs` for the M/M/N comparison.
    pub policy: String,
    pub report: CouplingReport,
}

/// Monotonicity from a small and a large start, pooled dominance for each
/// policy from empty, and the M/M/N comparison, for every seed. Results are
/// ordered by coupling, then seed.
pub fn coupling_suite(
    spec: &SystemSpec,
    policies: &[PolicyId],
    seeds: &[u64],
    events: u64,
) -> Result<Vec<CouplingRun>, RunError> {
    let mut levels = vec![0; spec.num_pools()];
    levels[0] = 1;
    let small = QueueState::per_pool(spec, &levels)?;
    let large = QueueState::uniform(spec, 2);
    let empty = QueueState::empty(spec);
    let mut kinds: Vec<(String, String, Option<&PolicyId>)> = vec![("monotonicity".into(), "sa-jsq".into(), None)];
    kinds.extend(policies.iter().map(|p| (format!("dominance/{p}"), p.label(), Some(p))));
    kinds.push(("mmn".into(), "jffs".into(), None));
    let jobs: Vec<(usize, u64)> = (0..kinds.len()).flat_map(|k| seeds.iter().map(move |&s| (k, s))).collect();
    jobs.par_iter()
        .map(|&(k, seed)| {
            let opts = RunOptions::new(events, seed);
            let (label, policy, p) = &kinds[k];
            let report = match (p, label.as_str()) {
                (Some(p), _) => coupled_dominance_with(spec, p, 0, &empty, &opts),
                (None, "monotonicity") => coupled_monotonicity_with(spec, &small, &large, &opts),
                (None, _) => coupled_mmn_with(spec, 0, 0, UnequalSteps::SharedUniform, &opts),
            }?;
            Ok(CouplingRun { coupling: label.clone(), policy: policy.clone(), report })
        })
        .collect()
}

fn coupling_check(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let mut table =
        Table::create(&ctx.dir, "couplings.csv", &header(&["coupling", "events", "violations", "min_rate_gap", "sim_time"]))?;
    let mut reports: Vec<CouplingReport> = Vec::new();
    for (lambda, n) in ctx.grid() {
        let spec = ctx.spec(n, lambda)?;
        let results = coupling_suite(&spec, &cfg.policies, &ctx.seeds, cfg.events)?;
        for c in &results {
            let (label, policy, rep) = (&c.coupling, &c.policy, &c.report);
            let mut row = key(Some(rep.seed), n, lambda, policy);
            row.extend([
                label.clone(),
                rep.events.to_string(),
                rep.violations.to_string(),
                rep.min_rate_gap.map(|g| g.to_string()).unwrap_or_default(),
                rep.sim_time.to_string(),
            ]);
            table.push(row)?;
            ctx.verdict(
                format!("{label} n={n} lambda={lambda} seed={}", rep.seed),
                rep.passed(),
                format!("violations={} events={}", rep.violations, rep.events),
            );
        }
        let mut policies: Vec<&str> = results.iter().map(|c| c.policy.as_str()).collect();
        policies.dedup();
        for p in policies {
            ctx.record(n, lambda, p);
        }
        table.flush()?;
        reports.extend(results.into_iter().map(|c| c.report));
    }
    ctx.files.push(table.finish()?);
    write_json(&ctx.dir, "reports.json", &reports)
}

fn bounds_check(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let mut table = Table::create(&ctx.dir, "tail_bounds.csv", &header(&["theta", "j", "l", "empirical", "bound"]))?;
    for (lambda, n) in ctx.grid() {
        let spec = ctx.spec(n, lambda)?;
        let thetas = match &cfg.thetas {
            Some(t) => t.iter().map(|&th| check_theta(th, lambda)).collect::<Result<Vec<_>, _>>()?,
            None => default_theta_grid(lambda),
        };
        for policy in &cfg.policies {
            let label = policy.label();
            let runs = ctx
                .seeds
                .par_iter()
                .map(|&s| {
                    let sim = SimConfig::new(spec.clone(), policy.clone())
                        .arrivals(cfg.arrivals)
                        .warmup(cfg.warmup)
                        .tail_depth(cfg.tail_depth)
                        .seed(s);
                    simulate_separate(&sim)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (mut pass, mut worst, mut checks) = (true, f64::INFINITY, 0);
            for &theta in &thetas {
                for j in 0..spec.num_pools() {
                    for l in 1..=cfg.max_level {
                        let bound = tail_bound(l, theta, j, &spec)?.bound;
                        let vals: Vec<f64> = runs.iter().map(|m| m.tail_probabilities.get(j, l as usize)).collect();
                        for (m, v) in runs.iter().zip(&vals) {
                            let mut row = key(Some(m.seed), n, lambda, &label);
                            row.extend([theta.to_string(), (j + 1).to_string(), l.to_string(), v.to_string(), bound.to_string()]);
                            table.push(row)?;
                        }
                        let e = mean_ci(&vals);
                        let ci = if e.half_width.is_finite() { e.half_width } else { 0.0 };
                        let slack = bound + 3.0 * ci - e.mean;
                        pass &= slack >= 0.0;
                        worst = worst.min(slack);
                        checks += 1;
                    }
                }
            }
            ctx.verdict(
                format!("tail bounds {label} n={n} lambda={lambda}"),
                pass,
                format!("{checks} comparisons, smallest slack {worst:.3e}"),
            );
            ctx.record(n, lambda, &label);
        }
        table.flush()?;
    }
    ctx.files.push(table.finish()?);
    Ok(())
}
