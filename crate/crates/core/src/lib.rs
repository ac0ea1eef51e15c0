//! Nonequilibrium thermodynamics of quantum coherence.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense complex matrices, Hermitian eigensystems, partial traces.
//! * [`state`]: density operators, entropies, coherence and athermality.
//! * [`qubit`]: closed-form spin-1/2 in a rotating field.
//! * [`dynamics`]: unitary and Lindblad propagation with first-law bookkeeping.
//! * [`network`]: exact enumeration of dynamic-Bayesian-network trajectories and
//!   the fluctuation relations they satisfy.
//! * [`response`]: linear-response (fluctuation-dissipation) work predictions.
//! * [`scenario`]: declarative scenario configs and deterministic data output.
//!
//! Units are natural (`ħ = k = 1`). Work is positive when done on the system.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod network;
pub mod qubit;
pub mod response;
pub mod scenario;
pub mod state;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
