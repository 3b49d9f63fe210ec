//! Generalization of a two-arm randomized trial's treatment effect to a
//! real-world, trial-eligible target population.
//!
//! The pipeline is: ingest and trim the cohorts ([`dataset`]), fit the
//! nuisance models ([`models`]), estimate the generalized effect with
//! outcome-model, IPSW and AIPSW estimators plus a stratified bootstrap
//! ([`estimators`]), probe robustness to unmeasured confounding with the
//! omitted-variable-bias tools ([`sensitivity`]) and map signs and robustness
//! of the confidence bounds onto a comparative conclusion ([`decision`]).
//! [`simulation`] provides synthetic cohorts with known truth.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod decision;
pub mod error;
pub mod estimators;
pub mod models;
mod parallel;
pub mod plot;
pub mod report;
pub mod sensitivity;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
pub use parallel::configure_threads;
