//! Truncated emphatic temporal-difference learning with linear function
//! approximation.
//!
//! The crate is split along the lines of the experiments it supports:
//!
//! - [`mdp`]: finite MDPs, tabular policies, induced chains and their
//!   stationary distributions.
//! - [`traces`]: followon traces (full, hard-truncated, soft, combined) in
//!   both the prediction and the control indexing.
//! - [`features`], [`policy`], [`agents`]: linear learners and the
//!   weight-dependent softmax policies used for control.
//! - [`analysis`]: closed-form truncated emphasis, expected update matrices,
//!   fixed points and truncation-length thresholds.
//! - [`diagnostics`]: Monte Carlo estimates linking sampled traces and
//!   updates to their closed forms.
//! - [`envs`]: Baird's counterexample and CartPole with a hashing tile coder.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod analysis;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod features;
pub mod linalg;
pub mod mdp;
pub mod policy;
pub mod traces;

pub use error::{Error, Result};

/// Deterministic generator used for every seeded run.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the per-run generator from a seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
