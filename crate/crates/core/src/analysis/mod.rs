//! Correlation maps from frame stacks, spot fits and mode counting.

mod export;
mod fit;
mod map;
mod moments;

use thiserror::Error;

use crate::geometry::{Angle2D, Camera};
use crate::scattering::{Frame, Pane};

pub use export::{write_fit_csv, write_map_csv, write_map_pgm, write_profile_csv};
pub use fit::{
    fit_gaussian_1d, fit_gaussian_2d, fit_profile, fit_spot, initial_guess_2d,
    locate_reference_spot, locate_twin_spot, window_samples, FitError, GaussianSpotFit, ProfileFit,
    DEFAULT_WINDOW_HALF_WIDTH, MAX_ITERATIONS, STEP_TOLERANCE,
};
pub use map::{correlation_map, cross_section, CorrelationMap, Profile};
pub use moments::{accumulate_frames, jackknife, pearson, Jackknife, MomentAccumulator, Reference};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} frames, have {found}")]
    InsufficientData { needed: u64, found: u64 },
    #[error("shape {found:?} does not match {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// M = 2 × envelope solid angle / spot solid angle, per-axis FWHM products.
pub fn count_modes(envelope_fwhm: (f64, f64), spot_fwhm: (f64, f64)) -> Result<u64, AnalysisError> {
    let all = [envelope_fwhm.0, envelope_fwhm.1, spot_fwhm.0, spot_fwhm.1];
    if !all.iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(AnalysisError::InvalidArgument(
            "FWHM values must be finite and > 0".into(),
        ));
    }
    Ok((2.0 * envelope_fwhm.0 * envelope_fwhm.1 / (spot_fwhm.0 * spot_fwhm.1)).round() as u64)
}

/// Circular angular aperture on a pane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualFiber {
    pub centre: Angle2D,
    /// μrad
    pub radius: f64,
}

/// Summed counts of the pixels whose centres lie strictly inside the fiber.
pub fn virtual_fiber_intensity(
    frame: &Frame,
    pane: Pane,
    camera: &Camera,
    fiber: &VirtualFiber,
) -> f64 {
    let data = frame.pane(pane);
    moments::disc_pixels(camera, fiber.centre, fiber.radius)
        .into_iter()
        .map(|(c, r)| data[r * camera.width + c] as f64)
        .sum()
}

/// Per-frame fiber intensities over a stack.
pub fn fiber_series(
    frames: &[Frame],
    pane: Pane,
    camera: &Camera,
    fiber: &VirtualFiber,
) -> Vec<f64> {
    let pixels = moments::disc_pixels(camera, fiber.centre, fiber.radius);
    frames
        .iter()
        .map(|f| {
            let data = f.pane(pane);
            pixels
                .iter()
                .map(|&(c, r)| data[r * camera.width + c] as f64)
                .sum()
        })
        .collect()
}
