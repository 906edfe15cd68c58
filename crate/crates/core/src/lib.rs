//! Evolutionary kernel optimization guided by ideas mined from a kernel
//! library's development history.
//!
//! The pipeline runs in three phases:
//!
//! 1. [`miner`] ingests an exported commit log plus periodic benchmark
//!    snapshots and attributes a per-commit effectiveness.
//! 2. [`pool`] abstracts commits into actionable thoughts and thoughts into
//!    general ideas, forming the idea pool.
//! 3. [`orchestrator`] runs parallel idea-seeded evolutionary searches
//!    ([`eoh`]) whose prompts are augmented with retrieved reference material
//!    ([`rag`]), scoring candidates with the [`eval`] harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod eoh;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod llm;
pub mod miner;
pub mod orchestrator;
pub mod pool;
pub mod rag;
pub mod report;
pub mod util;

pub use error::{Error, Result};
