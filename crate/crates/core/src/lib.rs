//! Multi-scale graph neural network ocean forecaster.
//!
//! The crate builds a pruned, ocean-only graph over a latitude-longitude grid
//! and two levels of a refined icosahedral mesh, runs an encode / process /
//! decode message-passing model on it, and rolls the model forward
//! autoregressively under a chosen atmospheric forcing product. Training,
//! evaluation metrics (masked RMSE, surface kinetic-energy spectra) and a
//! deterministic synthetic ocean for desk-scale experiments are included.
//!
//! Module map:
//!
//! - [`sphere`]: icosahedral mesh hierarchy and spherical geometry.
//! - [`grid`]: ocean grid, channel schema, field sets, normalization, regridding.
//! - [`graph`]: heterogeneous ocean graph construction with land pruning.
//! - [`autodiff`]: the small reverse-mode engine, MLPs, and AdamW.
//! - [`model`]: the one-step forecast function.
//! - [`rollout`]: multi-day forecasts and forcing sources.
//! - [`training`]: masked MSE and two-phase curriculum training.
//! - [`evaluation`]: RMSE, depth profiles, KE spectra, baselines.
//! - [`synthetic`]: the wind-coupled toy ocean generator.
//! - [`config`]: the experiment configuration document.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod grid;
mod io;
pub mod model;
pub mod rollout;
pub mod sphere;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
