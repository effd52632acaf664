//! Critical-slowing-down monitoring for controlled systems.
//!
//! Recorded or simulated telemetry goes through optional low-pass
//! filtering and decimation, moving-average detrending and sliding-window
//! lag-1 autocorrelation. Groups of indicator medians are compared with
//! rank statistics. Model-based measures (eigenvalues, disk margin,
//! backward reachable sets) provide the ground truth the indicators are
//! checked against.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod indicators;
pub mod preprocess;
pub mod resilience;
pub mod series;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
