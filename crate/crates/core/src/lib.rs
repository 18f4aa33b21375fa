//! Tuning-potential evaluation for control algorithms.
//!
//! The crate runs a tuning loop over a controller (parameter search by
//! Bayesian optimization plus whole-program rewrites proposed by an
//! advisor) across simulated environments, and condenses the
//! similarity-weighted gains into a single potential score.

pub mod advisor;
pub mod algorithms;
pub mod bayesopt;
pub mod dsl;
pub mod env;
pub mod orchestrator;
pub mod potential;
pub mod seeding;
