//! Differentially private tabular data synthesis with PATE-GAN, plus the
//! tooling needed to check whether a trained generator actually honors its
//! privacy claim.
//!
//! The crate has three layers:
//!
//! * a training engine ([`engine`]) implementing the PATE teacher/student GAN
//!   loop with a moments accountant, together with a registry of fault
//!   presets ([`presets`]) that reproduce the deviations found in public
//!   implementations (wrong noise scale, broken data partitioning, accountant
//!   bugs, missing PATE entirely);
//! * a black-box auditing kit ([`audit`]) that estimates empirical privacy
//!   leakage via membership-inference distinguishing games and binomial
//!   confidence bounds;
//! * a downstream-utility benchmark ([`bench`]) that scores synthetic data
//!   with a small roster of classifiers ([`classifiers`], [`metrics`]).
//!
//! Everything is deterministic given a master seed: parallel and serial runs
//! produce bit-identical results because every unit of work derives its own
//! RNG stream from (seed, indices). See [`exec`] for the worker model.

pub mod audit;
pub mod bench;
pub mod classifiers;
pub mod data;
pub mod dp;
pub mod engine;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod presets;
pub mod rng;

pub use error::{Error, Result};
