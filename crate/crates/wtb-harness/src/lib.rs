//! Experiment harness: configures seeded algorithm-by-instance grids, runs
//! them on a worker pool, computes regret or excess-loss curves, and emits
//! plot-ready CSV traces and aggregates. Reruns of a config under the same
//! master seed are byte-identical.

pub mod adaptivity;
pub mod config;
pub mod output;
pub mod runner;

pub use adaptivity::{adaptivity_demo, AdaptivityReport};
pub use config::{AlgorithmConfig, ExperimentConfig, RegretMode};
pub use runner::{m_scaling_sweep, run_experiment, ExperimentSummary, SweepSummary};
