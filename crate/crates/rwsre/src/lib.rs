//! Monte Carlo experiments for random walks in sparse random environments.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod limits;
pub mod output;
pub mod regime;
pub mod result;
pub mod runner;
pub mod scenarios;
pub mod seeding;
