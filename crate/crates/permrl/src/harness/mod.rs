//! Experiment drivers: configuration parsing, run orchestration, and
//! CSV/JSON reporting.

pub mod config;
pub mod portfolio;
pub mod report;
pub mod synthetic;

pub use config::ExperimentConfig;
pub use portfolio::run_portfolio;
pub use synthetic::run_synthetic_bound;
