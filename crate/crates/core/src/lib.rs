//! Spike-camera simulation, spike-to-intensity reconstruction, and a small
//! neural radiance field trained directly against spike counts through a
//! differentiable integrate-and-fire layer.

pub mod config;
pub mod demo;
pub mod error;
pub mod field;
pub mod formats;
pub mod metrics;
pub mod parallel;
pub mod recon;
pub mod scenegen;
pub mod sim;
pub mod snn;
pub mod spike;
pub mod trainer;

pub use error::{Error, Result};
pub use spike::{IntensityImage, PixelCoord, SpikeStream, SpikeStreamBuilder};
