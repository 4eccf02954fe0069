//! Solver library for transfer-entropy-regularized Markov decision processes
//! over finite spaces.
//!
//! The objective is `J + beta * I`, where `J` is the expected stage-additive
//! cost and `I` is the transfer entropy from the state process to the control
//! process (nats). Stationary policies are computed with a forward-backward
//! Arimoto-Blahut iteration ([`solver::solve`]) and checked against
//! brute-force and dynamic-programming oracles ([`oracle`]).

// `!(x < y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod envs;
pub mod error;
pub mod model;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};
