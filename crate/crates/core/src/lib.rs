//! Closed-loop Bayesian optimization of droplet-generating devices, scored by
//! watershed segmentation of droplet images.

pub mod acquisition;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod devices;
pub mod experiment;
pub mod rng;
pub mod sampling;
pub mod space;
pub mod state;
pub mod surrogate;
pub mod vision;
