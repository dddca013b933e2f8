//! Actor-critic training with a multi-layer neural critic (target networks,
//! experience replay, projected semi-gradient TD steps) and a Gaussian neural
//! actor updated by normalized decaying steps — together with a verification
//! lab that measures, on small exactly solvable MDPs, the error quantities
//! the algorithm's analysis is built from: the four-way critic error
//! decomposition, the target-stage recursion bound, mixing diagnostics, and
//! scaling fits against rollout size, inner step count, and iteration index.
//!
//! Everything is seeded and deterministic: two runs with the same
//! configuration produce identical records.

pub mod actor;
pub mod config;
pub mod critic;
pub mod error;
pub mod error_lab;
pub mod mdp;
pub mod net;
pub mod policy;
pub mod run;
pub mod sampling;

mod util;

pub use error::{Error, Result};
