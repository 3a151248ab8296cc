//! Reliability-aware multi-modal entity alignment under noisy correspondence.
//!
//! The crate is organised along the alignment pipeline:
//!
//! * [`dataset`] holds the two-graph data model, the on-disk layout, a
//!   synthetic generator with planted equivalences and the noise injector.
//! * [`encoders`] maps raw attribute features to unit-norm embeddings.
//! * [`reliability`] turns similarity rows into Dirichlet opinions,
//!   consensus scores, greedy correspondence estimates and pair divisions.
//! * [`objective`] implements the evidential losses and their gradients.
//! * [`fusion`] performs reliability-weighted attribute fusion.
//! * [`ttr`] re-scores shortlisted candidates with a pluggable reasoner.
//! * [`eval`] computes ranking metrics and noise-detection diagnostics.
//! * [`train`] and [`experiment`] wire everything into runnable experiments.

pub mod config;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod objective;
pub mod reliability;
pub mod special;
pub mod train;
pub mod ttr;

pub use error::{Result, RuleError};
