//! System-level V2X spectrum-sharing simulator with federated policy-gradient
//! training.
//!
//! The crate is layered bottom-up:
//!
//! * [`channel`]: Manhattan-grid vehicle drop, mobility, path loss, shadowing
//!   and fast fading, realized into linear channel power gains.
//! * [`env`]: the multi-agent V2X environment (SINR, rates, payload
//!   bookkeeping, observations and both scenario rewards).
//! * [`nn`]: the softmax MLP policy with manual backpropagation, Adam, and
//!   checkpoints.
//! * [`pg`]: trajectory sampling, the REINFORCE estimator and an exact
//!   enumeration oracle for small tabular games.
//! * [`federate`]: PASM (policy-gradient inexact ADMM with second-moment
//!   step), FedAvg, independent PG and the random baseline.
//! * [`diagnostics`]: augmented Lagrangian, descent and second-moment bound
//!   checks on a synthetic potential game.
//! * [`harness`]: configuration, training, evaluation and sweeps.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod federate;
pub mod harness;
pub mod nn;
pub mod pg;
pub mod rng;
pub mod units;

pub use error::{Error, Result};
pub use nn::ParamVector;
