//! Two-stage l1-regularized M-estimation of high-dimensional sparse
//! parameters identified by single-index conditional moment restrictions.
//!
//! The pipeline: estimate nuisance functions (conditional expectations,
//! propensities, opponent beliefs) on auxiliary folds with l1-penalized
//! first stages, plug them into an integrated M-estimator loss whose
//! gradient is Neyman-orthogonal to the nuisance error, and minimize the
//! penalized loss by proximal gradient — globally for monotone (convex)
//! moments, or inside a shrinking l1 ball around a preliminary estimate
//! otherwise.
//!
//! Four concrete models ship with the crate: a partially linear outcome
//! model with heterogeneous treatment effects, a logistic-link treatment
//! effect model, a general moment problem with missing outcomes, and a
//! two-player entry game with opponent-belief nuisances. A simulation
//! harness generates data from each model, runs the estimators next to
//! direct/IPS/oracle baselines, and writes CSV + JSON reports that are
//! byte-identical across reruns with the same seed.
//!
//! Start with the runnable examples (`cargo run --release --example ...`):
//! each one exercises one capability end to end. The thin `ortho-m` binary
//! exposes the same machinery as `simulate`, `estimate`, and `check`
//! subcommands.

pub mod apps;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod first_stage;
pub mod moment;
pub mod rng;
pub mod sim;
pub mod solver;

pub use data::Dataset;
pub use error::{Error, Result};
