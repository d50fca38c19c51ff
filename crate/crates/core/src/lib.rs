//! teamfuse: fuse per-trial judgments from human and machine judges into a
//! single team decision.
//!
//! Every teammate reports a choice and a confidence on each test case. Two
//! combination models turn those judgments into team predictions:
//!
//! * a confidence-weighted logistic regression, one signed-confidence
//!   predictor per teammate ([`logistic`]), with optional no-confidence,
//!   squashing, and interaction/polynomial variants;
//! * a Bayesian latent-score model for machine + human pairs ([`bayes`]),
//!   which also doubles as the synthetic-data generator.
//!
//! Teams are scored with leave-one-test-case-out cross-validation and the
//! calibration / diversity / significance statistics in [`eval`] and
//! [`stats`].

// index-style loops mirror the math throughout the numerical kernels
#![allow(clippy::needless_range_loop)]

pub mod bayes;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod logistic;
pub mod stats;

pub use data::{Dataset, Instance, Judgment, Kind, TeamSpec, Teammate};
pub use error::{Error, Result};
