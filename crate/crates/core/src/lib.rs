//! Simulation and reconstruction for adaptive single-pixel photon-counting
//! 3D imaging.
//!
//! A scene is measured through zero-shifted Hadamard patterns by a single
//! photon-counting detector that reports, per pattern, a photon count and a
//! sum of times of flight. Reconstruction starts from a fully sampled coarse
//! image and doubles the resolution stage by stage, re-measuring only the
//! regions a Haar wavelet tree predicts to contain depth edges.
//!
//! Module map:
//! - [`hadamard`]: Hadamard matrices, fast transforms, masked sensing plans
//! - [`wavelet`]: Haar analysis, upsampling, edge prediction
//! - [`photon`]: detector forward model
//! - [`pipeline`]: staged acquisition and reconstruction
//! - [`scene_gen`], [`io`], [`metrics`], [`log`]: scenes, files, quality

pub mod error;
pub mod hadamard;
pub mod image;
pub mod io;
pub mod log;
pub mod metrics;
pub mod photon;
pub mod pipeline;
pub mod scene_gen;
pub mod wavelet;

pub use error::{Error, Result};
pub use image::Image;
pub use photon::{MeasurementRecord, Scene, SimConfig, SimMode};
pub use pipeline::{
    run, MeasurementSource, ReconConfig, ReplaySource, RunStats, SimulatorSource, ThresholdPolicy,
};
