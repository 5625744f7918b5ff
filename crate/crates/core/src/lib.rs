#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Exact rates, exact Markov-chain analysis and pathwise simulation for the
//! long-range exclusion process on finite site spaces.

pub mod acceptance;
pub mod coupled;
pub mod error;
pub mod exact;
pub mod lattice;
pub mod parallel;
pub mod rates;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
