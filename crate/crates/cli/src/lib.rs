//! Configuration, orchestration and artifact output for `tpflow`.

pub mod config;
pub mod render;
pub mod runner;
pub mod sweep;

pub use config::{ExperimentConfig, InitialCurve};
pub use runner::{error_exit_code, run_experiment, termination_exit_code, RunReport};
