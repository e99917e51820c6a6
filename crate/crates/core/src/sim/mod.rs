//! Simulation harness: truth sampling, policy loops, metrics and export.

pub mod config;
pub mod export;
pub mod metrics;
pub mod runner;
pub mod synthetic;
pub mod truth;

pub use config::{prepare, ExperimentConfig, ExperimentSetup, PolicyKind, PriorMode};
pub use export::{export_results, RunSummary};
pub use metrics::{estimation_error, opportunity_cost, score_drops};
pub use runner::{run_replications, ReplicationResult, RunOptions, ScoreSnapshot};
pub use truth::{sample_truth, simulate_observation, TruthSpec};
