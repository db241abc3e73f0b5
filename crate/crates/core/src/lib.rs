//! Time-aware entity alignment between temporal knowledge graphs.
//!
//! The crate is organised bottom-up:
//!
//! - [`tkg`]: quadruple data model, dataset ingestion, shared time index,
//!   reverse-link generation and neighbourhood indexing.
//! - [`numerics`]: dense matrices, Householder reflections, dropout, RMSprop,
//!   finite-difference gradient checking and checkpoint files.
//! - [`model`]: the time-aware attention network and its analytic backward pass.
//! - [`trainer`]: margin ranking loss, negative sampling and the training loop.
//! - [`eval`]: L1 / CSLS ranking, MRR and Hits@N, time-sensitivity partitions.
//! - [`forge`]: overlap splits, synthetic graph pairs with planted ambiguity,
//!   dataset statistics and parameter counting.

pub mod error;
pub mod eval;
pub mod forge;
pub mod model;
pub mod numerics;
pub mod tkg;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::Real;
