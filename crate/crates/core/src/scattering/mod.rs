//! Stochastic Stokes/anti-Stokes frame generation.
//!
//! Write-side modes carry thermal (exponential) intensities; each retrieved
//! twin is the same intensity scaled by the mode's retrieval efficiency and
//! emitted in the phase-matched direction. Frames are the Gaussian mode
//! profiles integrated over pixels, plus background, Poisson-sampled.

mod io;
mod modes;
mod render;
mod stack;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use io::{
    read_header, read_stack, write_frame_csv, write_header, write_stack, StackReader, StackWriter,
    HEADER_LEN, MAGIC, VERSION,
};
pub use modes::{
    build_mode_set, calibrate_diffusion, calibrate_spot_constant, effective_source_diameter,
    sample_shot, spot_fwhm, Mode, ModeParams, ModeSet, RetrievalModel, ShotIntensities,
    DEFAULT_D_DIFF, DEFAULT_SPOT_CONSTANT,
};
pub use render::{render_expected, render_frame, ClipRecord, Frame, Pane, PaneLayout};
pub use stack::{simulate_stack, FrameStack, Schedule, Simulator, StackHeader};

#[derive(Debug, Error)]
pub enum ScatterError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("frame shape {found:?} does not match {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("stack format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
