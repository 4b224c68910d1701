//! Experiment runner for the spatial-trees toolkit: line-based configs,
//! a registry of named experiments, and JSON reports with CSV side files.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, Kind, Param};
pub use experiments::{acceptance_suite, find, registry, run_experiment, ExperimentSpec};
pub use report::{Metric, Report, Sink};
