//! Geometry, default-box selection, target encoding, loss kernels and
//! evaluation for a two-stage oriented object detector.

pub mod anchors;
pub mod cli;
pub mod encoding;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod synthdata;

pub use error::{Error, Result};
