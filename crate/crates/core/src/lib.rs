//! Bose-Einstein condensate arrays in a tilted optical lattice.
//!
//! Band-structure calibration of the Bose-Hubbard parameters, number-squeezed
//! on-site states, sampled mean-field dynamics of the array, synthetic
//! time-of-flight imaging and the peak-fitting analysis that turns images
//! into coherence times.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod imaging;
pub mod lattice;
pub mod output;
pub mod pipeline;
pub mod states;
pub mod two_site;
pub mod units;

pub use error::{Error, Result};
