//! Classification of raw RF IQ windows by transmission protocol, transmitting
//! base station, or both, with a 4-channel 1D CNN.

pub mod classifier;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
