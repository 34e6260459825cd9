//! Data scaling-law estimation and dataset planning for end-to-end driving
//! models.
//!
//! The crate covers the full loop from raw evaluation outputs to data
//! decisions:
//!
//! * [`metrics`] — trajectory metrics (ADE/FDE/miss rate) and the
//!   closed-loop mean distance between failures, producing the
//!   (dataset-size, metric) observations everything else consumes.
//! * [`estimators`] — the four scaling-law families M1–M4 with forward
//!   evaluation, closed-form inversion and asymptotes.
//! * [`fitting`] — constrained multi-start least squares, the held-out
//!   selection protocol and the fit-progression study.
//! * [`planner`] — required-data, improvement-cost, data-equivalence and
//!   normalization queries on fitted curves.
//! * [`curation`] — geofenced clustering, ODD-balanced split assignment and
//!   cumulative training tiers.
//! * [`actions`] — lane-graph action auto-labeling and feature encodings.
//! * [`schedule`] — adaptive epoch counts, compute budgets and
//!   cosine-annealing learning-rate traces.
//! * [`synth`] — seeded generators used as oracles by the test suites and
//!   for fixture construction.

pub mod actions;
pub mod curation;
pub mod error;
pub mod estimators;
pub mod fitting;
mod lm;
pub mod metrics;
pub mod planner;
pub mod schedule;
pub mod synth;

pub use error::{Error, Result};
