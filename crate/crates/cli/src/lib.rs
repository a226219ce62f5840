//! Command-line driver: JSON experiment configs in, `metrics.csv` out.

pub mod build;
pub mod config;
pub mod error;
pub mod metrics;
pub mod run;

pub use build::{build, Experiment};
pub use config::{parse_config, ExperimentConfig, Overrides};
pub use error::CliError;
pub use metrics::{emit_metrics_csv, read_metrics_csv, MetricsRow};
pub use run::{run_cli, run_config};
