//! Configuration-driven experiment harness: dataset generation, training,
//! evaluation, out-of-distribution sweeps and training-cost benchmarks.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod scenario;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use metrics::{MetricName, MetricsRow, CSV_HEADER};
