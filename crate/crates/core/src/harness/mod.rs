//! Experiment orchestration: reference trajectory, configuration, the closed
//! loop, metrics, statistics, batch running, reporting, logging, and tuning.

pub mod batch;
pub mod config;
pub mod experiment;
pub mod logio;
pub mod metrics;
pub mod reference;
pub mod report;
pub mod stats;
pub mod tune;

pub use batch::{batch_run, BatchResult, Exclusion};
pub use config::Config;
pub use experiment::{calibration_log, normalizer_for, run_experiment, ExperimentLog, LogRow};
pub use metrics::{xy_rms, Phase, RunSummary, Score};
pub use reference::{reference, Protocol};
