//! Experiment harness for truncated emphatic TD.
//!
//! - [`config`]: sweep configuration, presets and fingerprints.
//! - [`sweep`]: parallel, resumable execution with per-run CSV files and a
//!   manifest.
//! - [`aggregate`]: cross-seed curves, step-size selection and variance
//!   tables.
//! - [`report`]: tables and aggregate curves built from a finished sweep.
//! - [`smooth`]: trailing moving average.
//! - [`analyze`]: closed-form emphasis reports for finite MDPs.

pub mod aggregate;
pub mod analyze;
pub mod config;
pub mod error;
pub mod report;
pub mod smooth;
pub mod sweep;

pub use error::{HarnessError, Result};
