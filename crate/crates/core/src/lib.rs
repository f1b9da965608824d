//! Monte Carlo toolkit for nearest-neighbour random walks in sparse random environments.
//!
//! The crate is `no_std` with `alloc`. Every sampler takes a caller-supplied RNG.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod math;

pub mod branching;
pub mod environment;
pub mod heavytail;
pub mod limitlaw;
pub mod stats;
pub mod walk;
