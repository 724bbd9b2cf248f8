//! Configuration, orchestration and the injection simulator.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod simulate;

pub use config::{ConfigError, RunConfig};
pub use pipeline::{run_pipeline, Evaluator, HarnessError, RunSummary};
