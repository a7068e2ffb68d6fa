//! Simulation and analysis for an angularly multimode Raman quantum memory
//! with acousto-optically steered readout.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod control;
pub mod geometry;
pub mod pipeline;
pub mod rng;
pub mod scattering;
pub mod stamp;
