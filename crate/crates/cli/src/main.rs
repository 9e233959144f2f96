use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hetlb::desim::{simulate_mmn, simulate_pooled_jffs, simulate_separate, simulate_trajectory, write_trajectory_csv};
use hetlb::fluid::{compute_arrival_split, fixed_point, integrate_fluid, pooled_fixed_point, write_fixed_point_csv, write_split_csv};
use hetlb::rng::replication_seed;
use hetlb::{PolicyId, QueueState, SimConfig, SystemSpec};
use hetlb_cli::{coupling_suite, parse_config, run_experiment, sha256_hex, RunSettings};

#[derive(Parser)]
#[command(name = "hetlb", version, about = "Speed-aware load balancing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a configuration file.
    Run(RunArgs),
    /// One stationary simulation; prints the metrics as JSON.
    Simulate(SimulateArgs),
    /// Coupled runs; one verdict line per coupling and seed, then a JSON report.
    Couple(CoupleArgs),
    /// Fluid fixed point and its arrival split.
    FixedPoint(FixedPointArgs),
    /// Fluid trajectory as `t,i,j,x` rows.
    Fluid(FluidArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory; overrides `out` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Root of the per-replication seeds.
    #[arg(long, default_value_t = 1)]
    seed_base: u64,
    /// Run only the named section.
    #[arg(long)]
    only: Option<String>,
}

#[derive(Args, Clone)]
struct FarmArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.7)]
    lambda: f64,
    /// Per-pool speeds, fastest first; rescaled to unit capacity.
    #[arg(long, value_delimiter = ',', default_values_t = [2.5, 0.625])]
    speeds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.8])]
    fractions: Vec<f64>,
}

impl FarmArgs {
    fn spec(&self) -> Result<SystemSpec> {
        Ok(SystemSpec::from_rates(&self.speeds, &self.fractions, self.n, self.lambda)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum System {
    Separate,
    Pooled,
    Mmn,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    farm: FarmArgs,
    #[arg(long, default_value = "sa-jsq")]
    policy: PolicyId,
    #[arg(long, value_enum, default_value_t = System::Separate)]
    system: System,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300_000)]
    arrivals: u64,
    #[arg(long, default_value_t = 0.5)]
    warmup: f64,
    #[arg(long, default_value_t = 64)]
    tail_depth: usize,
    /// Also dump an empirical trajectory from empty to this CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 0.1)]
    sample_every: f64,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Which {
    All,
    Monotonicity,
    Dominance,
    Mmn,
}

#[derive(Args)]
struct CoupleArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.9)]
    lambda: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [2.5, 0.625])]
    speeds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.8])]
    fractions: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Which::All)]
    coupling: Which,
    /// Policies for the dominance coupling, separated by spaces.
    #[arg(long, num_args = 1.., default_values = ["sa-jsq", "jsq", "sq:d=2"])]
    policy: Vec<PolicyId>,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    seed_base: u64,
    #[arg(long, default_value_t = 1_000_000)]
    events: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FixedPointArgs {
    #[command(flatten)]
    farm: FarmArgs,
    /// Also print the arrival split at the fixed point.
    #[arg(long)]
    split: bool,
}

#[derive(Args)]
struct FluidArgs {
    #[command(flatten)]
    farm: FarmArgs,
    /// Per-pool starting queue lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [3u32, 1])]
    initial: Vec<u32>,
    #[arg(long, default_value_t = 16)]
    depth: usize,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = hetlb::fluid::DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = 0.1)]
    sample_every: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<bool> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let configs = parse_config(&text).with_context(|| format!("in {}", args.config.display()))?;
    let selected: Vec<_> = configs.iter().filter(|c| args.only.as_ref().is_none_or(|o| &c.name == o)).collect();
    if selected.is_empty() {
        bail!("no section named {:?}", args.only.unwrap_or_default());
    }
    let mut ok = true;
    for cfg in selected {
        let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
        let settings = RunSettings {
            out,
            workers: args.workers,
            seed_base: args.seed_base,
            config_sha256: sha256_hex(text.as_bytes()),
            quiet: false,
        };
        println!("== {} ({})", cfg.name, cfg.kind);
        let summary = run_experiment(cfg, &settings).with_context(|| format!("experiment {}", cfg.name))?;
        for f in &summary.files {
            println!("wrote {} ({} rows)", summary.dir.join(&f.name).display(), f.rows);
        }
        ok &= summary.passed();
    }
    Ok(ok)
}

fn simulate(args: SimulateArgs) -> Result<bool> {
    let spec = args.farm.spec()?;
    args.policy.validate(&spec)?;
    let cfg = SimConfig::new(spec.clone(), args.policy.clone())
        .arrivals(args.arrivals)
        .warmup(args.warmup)
        .tail_depth(args.tail_depth)
        .seed(args.seed);
    let metrics = match args.system {
        System::Separate => simulate_separate(&cfg)?,
        System::Pooled => simulate_pooled_jffs(&cfg)?,
        System::Mmn => simulate_mmn(&cfg)?,
    };
    println!("{}", metrics.to_json());
    if let Some(path) = &args.trajectory {
        let traj = simulate_trajectory(
            &spec,
            &args.policy,
            &QueueState::empty(&spec),
            args.t_end,
            args.sample_every,
            args.seed,
            args.tail_depth,
        )?;
        write_trajectory_csv(&traj, output(Some(path))?)?;
    }
    Ok(true)
}

fn couple(args: CoupleArgs) -> Result<bool> {
    let spec = SystemSpec::from_rates(&args.speeds, &args.fractions, args.n, args.lambda)?;
    let seeds: Vec<u64> = (0..args.seeds).map(|r| replication_seed(args.seed_base, r)).collect();
    let runs = coupling_suite(&spec, &args.policy, &seeds, args.events)?;
    let wanted = |name: &str| match args.coupling {
        Which::All => true,
        Which::Monotonicity => name == "monotonicity",
        Which::Dominance => name.starts_with("dominance"),
        Which::Mmn => name == "mmn",
    };
    let mut reports = Vec::new();
    let mut ok = true;
    for r in runs.into_iter().filter(|r| wanted(&r.coupling)) {
        let pass = r.report.passed();
        ok &= pass;
        eprintln!(
            "{} {} seed={} events={} violations={}",
            if pass { "PASS" } else { "FAIL" },
            r.coupling,
            r.report.seed,
            r.report.events,
            r.report.violations
        );
        reports.push(r.report);
    }
    let mut out = output(args.report.as_ref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
    Ok(ok)
}

fn fixed_point_cmd(args: FixedPointArgs) -> Result<bool> {
    let spec = args.farm.spec()?;
    let x = fixed_point(&spec);
    let stdout = io::stdout();
    write_fixed_point_csv(&x, stdout.lock())?;
    eprintln!("z* = {}", pooled_fixed_point(&spec));
    if args.split {
        write_split_csv(&compute_arrival_split(&x, &spec)?, stdout.lock())?;
    }
    Ok(true)
}

fn fluid(args: FluidArgs) -> Result<bool> {
    let spec = args.farm.spec()?;
    let x0 = QueueState::per_pool(&spec, &args.initial)?.tail_measure(&spec, args.depth)?;
    let traj = integrate_fluid(&x0, &spec, args.t_end, args.dt, args.sample_every)?;
    write_trajectory_csv(&traj, output(args.out.as_ref())?)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Simulate(a) => simulate(a),
        Command::Couple(a) => couple(a),
        Command::FixedPoint(a) => fixed_point_cmd(a),
        Command::Fluid(a) => fluid(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
