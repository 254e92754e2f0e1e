//! Step-size modification for projected stochastic subgradient descent whose
//! last iterate attains the optimal rate, plus numerical checks of the
//! supporting inequalities and lower-bound constructions.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod ensemble;
pub mod harness;
pub mod error;
pub mod lower_bound;
pub mod problem;
pub mod rng;
pub mod schedule;
pub mod sgd;

pub use error::{Error, Result};
