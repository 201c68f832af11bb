//! Batch experiment runner: scenario configs, simulated runs of the range-VIO
//! filter, error metrics, observability reports and CSV artifacts.

pub mod checksum;
pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::ScenarioConfig;
pub use error::{HarnessError, Result};
pub use run::{compare_modes, run_filter, run_scenario, Comparison, RunMetrics, RunOutput};
