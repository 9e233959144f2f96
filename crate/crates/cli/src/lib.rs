//! Experiment runner for the `hetlb` command.

pub mod config;
pub mod experiment;

pub use config::{parse_config, parse_grid, ConfigError, ConfigErrorKind, ExperimentConfig, Kind};
pub use experiment::{coupling_suite, run_experiment, CouplingRun, sha256_hex, ExperimentSummary, Manifest, RunError, RunSettings, Verdict};
