//! Precoder optimization for downlink rate-splitting multiple access under
//! imperfect CSIT, by generalized power iteration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel_model;
pub mod error;
pub mod gpi_solver;
pub mod linalg;
pub mod oracles;
pub mod problem;
pub mod quotient_forms;
pub mod rate_bounds;
pub mod sim_harness;

pub use error::{Error, Result};
pub use problem::{MessageId, MessageSet, Problem};
