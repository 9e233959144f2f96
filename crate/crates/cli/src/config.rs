//! Experiment configuration files.
//!
//! ```text
//! # comment
//! out = results            # keys before the first section are shared defaults
//!
//! [light-load]
//! kind = fig1
//! lambda = 0.1:0.9:0.1     # start:stop:step, inclusive
//! n = 1000
//! policies = jsq sa-jsq    # whitespace separated
//! ```
//!
//! Each `[name]` section is one experiment. Numeric lists are comma
//! separated.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use hetlb::PolicyId;

pub const DEFAULT_N: usize = 1000;
pub const DEFAULT_ARRIVALS: u64 = 300_000;
pub const DEFAULT_WARMUP: f64 = 0.5;
pub const DEFAULT_SEEDS: u64 = 5;
pub const DEFAULT_EVENTS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Fig1,
    Fig2,
    Fig3a,
    Fig3b,
    FixedPoint,
    FluidTrace,
    CouplingCheck,
    BoundsCheck,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Fig1,
        Kind::Fig2,
        Kind::Fig3a,
        Kind::Fig3b,
        Kind::FixedPoint,
        Kind::FluidTrace,
        Kind::CouplingCheck,
        Kind::BoundsCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Fig1 => "fig1",
            Kind::Fig2 => "fig2",
            Kind::Fig3a => "fig3a",
            Kind::Fig3b => "fig3b",
            Kind::FixedPoint => "fixed-point",
            Kind::FluidTrace => "fluid-trace",
            Kind::CouplingCheck => "coupling-check",
            Kind::BoundsCheck => "bounds-check",
        }
    }

    /// Verdict suites make `run` exit non-zero when they fail.
    pub fn is_check(self) -> bool {
        matches!(self, Kind::CouplingCheck | Kind::BoundsCheck)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigErrorKind {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` expects {expected}, found `{found}`")]
    TypeMismatch { key: String, expected: &'static str, found: String },
    #[error("section `{section}` is missing required key `{key}`")]
    MissingRequired { section: String, key: &'static str },
    #[error("`{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("duplicate {0}")]
    Duplicate(String),
    #[error("{0}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ConfigError {
    /// One-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub kind: ConfigErrorKind,
}

impl ConfigError {
    fn at(line: usize, kind: ConfigErrorKind) -> Self {
        Self { line, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: Kind,
    pub speeds: Vec<f64>,
    pub fractions: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub ns: Vec<usize>,
    pub seeds: u64,
    pub arrivals: u64,
    pub warmup: f64,
    #[serde(serialize_with = "policy_labels")]
    pub policies: Vec<PolicyId>,
    pub tail_depth: usize,
    pub out: Option<PathBuf>,
    /// Coupled events per run.
    pub events: u64,
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: f64,
    /// Per-pool starting queue length for trajectories.
    pub initial: Vec<u32>,
    pub thetas: Option<Vec<f64>>,
    pub max_level: u32,
}

fn policy_labels<S: serde::Serializer>(p: &[PolicyId], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(p.iter().map(PolicyId::label))
}

const KEYS: &[&str] = &[
    "kind",
    "speeds",
    "fractions",
    "lambda",
    "n",
    "seeds",
    "arrivals",
    "warmup",
    "policies",
    "tail_depth",
    "out",
    "events",
    "t_end",
    "dt",
    "sample_every",
    "initial",
    "theta",
    "max_level",
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<(String, Entry)>,
}

impl Section {
    fn get<'a>(&'a self, shared: &'a Section, key: &str) -> Option<&'a Entry> {
        self.entries.iter().chain(&shared.entries).find(|(k, _)| k == key).map(|(_, e)| e)
    }
}

fn split_sections(text: &str) -> Result<(Section, Vec<Section>), ConfigError> {
    let mut shared = Section { name: String::new(), line: 0, entries: Vec::new() };
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| ConfigError::at(line, ConfigErrorKind::Syntax(format!("malformed section header `{body}`"))))?;
            if sections.iter().any(|s| s.name == name) {
                return Err(ConfigError::at(line, ConfigErrorKind::Duplicate(format!("section `{name}`"))));
            }
            sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, ConfigErrorKind::Syntax(format!("expected `key = value`, found `{body}`"))))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::at(line, ConfigErrorKind::UnknownKey(key.to_string())));
        }
        let target = sections.last_mut().unwrap_or(&mut shared);
        if target.entries.iter().any(|(k, _)| k == key) {
            return Err(ConfigError::at(line, ConfigErrorKind::Duplicate(format!("key `{key}`"))));
        }
        target.entries.push((key.to_string(), Entry { line, value: value.trim().to_string() }));
    }
    Ok((shared, sections))
}

fn mismatch(key: &str, e: &Entry, expected: &'static str) -> ConfigError {
    ConfigError::at(e.line, ConfigErrorKind::TypeMismatch { key: key.to_string(), expected, found: e.value.clone() })
}

fn invalid(key: &str, e: &Entry, reason: impl Into<String>) -> ConfigError {
    ConfigError::at(e.line, ConfigErrorKind::InvalidValue { key: key.to_string(), reason: reason.into() })
}

fn scalar<T: FromStr>(key: &str, e: &Entry, expected: &'static str) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| mismatch(key, e, expected))
}

/// Integer counts also accept `3e5`-style literals when they are whole.
fn count(key: &str, e: &Entry) -> Result<u64, ConfigError> {
    if let Ok(v) = e.value.parse::<u64>() {
        return Ok(v);
    }
    match e.value.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(63) => Ok(v as u64),
        _ => Err(mismatch(key, e, "a non-negative integer")),
    }
}

fn list<T: FromStr>(key: &str, e: &Entry, expected: &'static str) -> Result<Vec<T>, ConfigError> {
    let v = e
        .value
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| mismatch(key, e, expected)))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err(invalid(key, e, "empty list"));
    }
    Ok(v)
}

/// `a:b:step` (inclusive of `b` up to rounding) or a comma separated list.
pub fn parse_grid(text: &str) -> Option<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step): (f64, f64, f64) = (a.parse().ok()?, b.parse().ok()?, step.parse().ok()?);
            if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
                return None;
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            // round away the accumulated binary noise so grids print cleanly
            Some((0..count).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect())
        }
        [_] => text.split(',').map(|p| p.trim().parse().ok()).collect(),
        _ => None,
    }
}

struct Defaults {
    speeds: Vec<f64>,
    fractions: Vec<f64>,
    lambdas: Vec<f64>,
    ns: Vec<usize>,
    policies: Vec<PolicyId>,
}

fn defaults(kind: Kind) -> Defaults {
    let fig1_pools = (vec![2.5, 0.625], vec![0.2, 0.8]);
    let half_pools = (vec![4.0 / 3.0, 2.0 / 3.0], vec![0.5, 0.5]);
    let sweep: Vec<f64> = parse_grid("0.1:0.9:0.1").expect("valid grid");
    let (pools, lambdas, ns, policies) = match kind {
        Kind::Fig1 => (fig1_pools.clone(), sweep, vec![DEFAULT_N], vec![PolicyId::Jsq, PolicyId::SaJsq]),
        Kind::Fig2 => (fig1_pools, sweep, vec![50], vec![PolicyId::Sed, PolicyId::SaJsq]),
        Kind::Fig3a => (
            fig1_pools.clone(),
            sweep,
            vec![DEFAULT_N],
            vec![PolicyId::Jsq, PolicyId::SaJsq, PolicyId::SqPerPool(vec![2, 2])],
        ),
        Kind::Fig3b => (half_pools, vec![0.5, 0.7, 0.9], vec![50, 100, 200, 400], vec![PolicyId::SaJsq]),
        Kind::FixedPoint => (fig1_pools, vec![0.7], vec![DEFAULT_N], vec![PolicyId::SaJsq]),
        Kind::FluidTrace => (fig1_pools, vec![0.7], vec![2000], vec![PolicyId::SaJsq]),
        Kind::CouplingCheck => (
            fig1_pools,
            vec![0.9],
            vec![100],
            vec![PolicyId::SaJsq, PolicyId::Jsq, PolicyId::SqD(2)],
        ),
        Kind::BoundsCheck => (fig1_pools, vec![0.5, 0.8], vec![100, 500], vec![PolicyId::SaJsq]),
    };
    Defaults { speeds: pools.0, fractions: pools.1, lambdas, ns, policies }
}

fn build(section: &Section, shared: &Section) -> Result<ExperimentConfig, ConfigError> {
    let get = |k: &str| section.get(shared, k);
    let kind_entry = get("kind").ok_or_else(|| {
        ConfigError::at(section.line, ConfigErrorKind::MissingRequired { section: section.name.clone(), key: "kind" })
    })?;
    let kind: Kind = kind_entry.value.parse().map_err(|_| {
        let names: Vec<&str> = Kind::ALL.iter().map(|k| k.as_str()).collect();
        invalid("kind", kind_entry, format!("expected one of {}", names.join(", ")))
    })?;
    let d = defaults(kind);

    let speeds = get("speeds").map(|e| list::<f64>("speeds", e, "a list of numbers")).transpose()?.unwrap_or(d.speeds);
    let fractions =
        get("fractions").map(|e| list::<f64>("fractions", e, "a list of numbers")).transpose()?.unwrap_or(d.fractions);
    if speeds.len() != fractions.len() {
        let e = get("fractions").or(get("speeds")).expect("one of them was given");
        return Err(invalid("fractions", e, format!("{} speeds but {} fractions", speeds.len(), fractions.len())));
    }
    let lambdas = match get("lambda") {
        Some(e) => parse_grid(&e.value).ok_or_else(|| mismatch("lambda", e, "a grid `a:b:step` or a list of numbers"))?,
        None => d.lambdas,
    };
    if let Some(e) = get("lambda") {
        if lambdas.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(invalid("lambda", e, "every load must lie in (0, 1)"));
        }
    }
    let ns = get("n").map(|e| list::<usize>("n", e, "a list of integers")).transpose()?.unwrap_or(d.ns);
    let seeds = get("seeds").map(|e| count("seeds", e)).transpose()?.unwrap_or(DEFAULT_SEEDS);
    if seeds == 0 {
        return Err(invalid("seeds", get("seeds").expect("present"), "need at least one seed"));
    }
    let arrivals = get("arrivals").map(|e| count("arrivals", e)).transpose()?.unwrap_or(DEFAULT_ARRIVALS);
    let warmup = get("warmup").map(|e| scalar::<f64>("warmup", e, "a number")).transpose()?.unwrap_or(DEFAULT_WARMUP);
    if let Some(e) = get("warmup") {
        if !(0.0..1.0).contains(&warmup) {
            return Err(invalid("warmup", e, "fraction must lie in [0, 1)"));
        }
    }
    let policies = match get("policies") {
        Some(e) => e
            .value
            .split_whitespace()
            .map(|p| p.parse::<PolicyId>().map_err(|err| invalid("policies", e, err.to_string())))
            .collect::<Result<Vec<_>, _>>()?,
        None => d.policies,
    };
    if policies.is_empty() {
        return Err(invalid("policies", get("policies").expect("present"), "empty list"));
    }
    let tail_depth = get("tail_depth").map(|e| count("tail_depth", e)).transpose()?.map_or(hetlb::model::DEFAULT_DEPTH, |v| v as usize);
    let out = get("out").map(|e| PathBuf::from(&e.value));
    let events = get("events").map(|e| count("events", e)).transpose()?.unwrap_or(DEFAULT_EVENTS);
    let t_end = get("t_end").map(|e| scalar::<f64>("t_end", e, "a number")).transpose()?.unwrap_or(10.0);
    let dt = get("dt").map(|e| scalar::<f64>("dt", e, "a number")).transpose()?.unwrap_or(hetlb::fluid::DEFAULT_DT);
    let sample_every = get("sample_every").map(|e| scalar::<f64>("sample_every", e, "a number")).transpose()?.unwrap_or(0.1);
    let initial = get("initial").map(|e| list::<u32>("initial", e, "a list of integers")).transpose()?.unwrap_or_else(|| {
        let mut v = vec![0; speeds.len()];
        v.iter_mut().take(2).zip([3, 1]).for_each(|(x, l)| *x = l);
        v
    });
    if initial.len() != speeds.len() {
        return Err(invalid("initial", get("initial").expect("present"), "need one level per pool"));
    }
    let thetas = get("theta").map(|e| list::<f64>("theta", e, "a list of numbers")).transpose()?;
    let max_level = get("max_level").map(|e| count("max_level", e)).transpose()?.map_or(15, |v| v as u32);

    for (key, ok) in [("dt", dt > 0.0), ("sample_every", sample_every > 0.0), ("t_end", t_end >= 0.0)] {
        if !ok {
            return Err(invalid(key, get(key).expect("defaults are valid"), "must be positive"));
        }
    }
    if ns.contains(&0) {
        return Err(invalid("n", get("n").expect("defaults are valid"), "farm sizes must be positive"));
    }
    Ok(ExperimentConfig {
        name: section.name.clone(),
        kind,
        speeds,
        fractions,
        lambdas,
        ns,
        seeds,
        arrivals,
        warmup,
        policies,
        tail_depth,
        out,
        events,
        t_end,
        dt,
        sample_every,
        initial,
        thetas,
        max_level,
    })
}

/// Parses every section of a configuration file.
pub fn parse_config(text: &str) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let (shared, sections) = split_sections(text)?;
    if sections.is_empty() {
        return Err(ConfigError::at(0, ConfigErrorKind::Syntax("no `[section]` found".into())));
    }
    sections.iter().map(|s| build(s, &shared)).collect()
}
