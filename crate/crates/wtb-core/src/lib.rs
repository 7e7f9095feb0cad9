//! Simulation library for bandits whose per-action loss is a function of a
//! weighted tally of that action's plays over a sliding memory window.
//!
//! The crate provides:
//!
//! - [`env`] — exact environment semantics: tally vectors, weighted tallies,
//!   expected losses, and unbiased stochastic feedback.
//! - [`oracle`] — an exact dynamic-programming oracle for the minimum
//!   cumulative expected loss over all fixed action sequences, an
//!   independent brute-force cross-check, and the complete policy regret of
//!   a recorded run.
//! - [`algorithms`] — the epoch-based successive-elimination algorithm and
//!   the three baselines (exponential weights, its batched variant, and an
//!   epoch-based confidence-bound rule).
//! - [`instances`] — constructors for every bundled problem family,
//!   including the lower-bound constructions.
//! - [`f1`] — a lap-time ingestion, normalization, and model-fitting
//!   pipeline that turns race telemetry into two-action instances.

pub mod algorithms;
pub mod env;
pub mod error;
pub mod f1;
pub mod instances;
pub mod oracle;
pub mod seeding;
pub mod trace;

pub use env::{Feedback, HistoryWindow, LossRule, Observation, WtbInstance};
pub use error::{Result, WtbError};
pub use trace::RunTrace;
