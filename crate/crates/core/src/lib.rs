//! Context-aware sequential recommendation over multi-behavior interaction logs.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, a reverse-mode gradient tape and a
//!   finite-difference gradient checker.
//! - [`data`]: interaction-log ingestion, leave-one-out splitting, padded
//!   training sequences with sampled negatives and evaluation candidates.
//! - [`model`]: item/behavior embedding fusion, causal multi-head
//!   self-attention and sigmoid dot-product scoring, plus checkpoints.
//! - [`training`]: behavior-weighted binary cross-entropy, Adam and the
//!   epoch loop.
//! - [`eval`]: HR@N / NDCG@N over 100-candidate lists, multi-seed
//!   aggregation and frequency-stratified breakdowns.
//! - [`app`]: run configuration, presets, ablation grids, runtime benchmark
//!   and report writers used by the `casm` binary.

pub mod app;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod training;

pub use error::{CasmError, Result};
