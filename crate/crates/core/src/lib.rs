//! Wideband diffuse-field spatial correlation, finite-loudspeaker soundfield
//! simulation with fixed or randomly perturbed microphone arrays, and
//! diffuse-field magnitude calibration of multichannel arrays.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod campaign;
pub mod error;
pub mod estimator;
pub mod field_theory;
pub mod geometry;
pub mod simulator;

pub use error::{Error, Result};
