//! Simulators for the distance-based quantum classifier.
//!
//! The classifier compares a test vector with training vectors through a
//! single interference measurement. Only the ancilla and feature registers
//! evolve coherently, so the index and class registers are handled
//! classically:
//!
//! * [`classifier`] — exact channel-form probabilities, the repeat-until-success
//!   sampler and the leave-one-out tables.
//! * [`encoding`] — preprocessing, amplitude encoding and preparation circuits.
//! * [`oqw`] — open quantum walk engine and the distributed agent protocol.
//! * [`recycling`] — reuse of the post-measurement state.
//! * [`data`] — Iris ingestion, folds and report serialization.
//! * [`qstate`] — the underlying few-qubit state simulator.

pub mod classifier;
pub mod data;
pub mod encoding;
pub mod error;
pub mod exec;
pub mod oqw;
pub mod qstate;
pub mod recycling;

pub use error::{Error, Result};
pub use exec::Execution;

/// Index of a class within a dataset's ordered class list.
pub type ClassId = usize;
