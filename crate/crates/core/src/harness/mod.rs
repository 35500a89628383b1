//! Experiment orchestration: configuration, dataset files, the scenario
//! suite, sweeps, timing and reports.

pub mod config;
pub mod dataset_io;
pub mod report;
pub mod suite;
pub mod sweep;
pub mod timing;

pub use config::{ExperimentConfig, Preset, StrategyKind};
pub use suite::Workbench;
