//! Simulation and verification toolkit for SDEs driven by a time-changed
//! Brownian motion `B_{E_t}`, where `E` inverts an α-stable subordinator.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod clock;
pub mod csv;
pub mod experiments;
pub mod model;
mod quadrature;
pub mod seeding;
pub mod special_fn;
pub mod theta;
