use super::moments::MomentAccumulator;
use super::AnalysisError;
use crate::geometry::{Angle2D, Axis, Camera};
use crate::scattering::Pane;

/// Pearson correlation of every pixel with the reference; NaN where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub camera: Camera,
    pub stokes: Vec<f64>,
    pub anti_stokes: Vec<f64>,
    pub ref_angle: Angle2D,
    pub ref_pane: Pane,
    /// Reference pixels (col, row) on `ref_pane`.
    pub ref_pixels: Vec<(usize, usize)>,
    pub n_frames: u64,
}

impl CorrelationMap {
    pub fn pane(&self, pane: Pane) -> &[f64] {
        match pane {
            Pane::Stokes => &self.stokes,
            Pane::AntiStokes => &self.anti_stokes,
        }
    }

    pub fn value(&self, pane: Pane, col: usize, row: usize) -> f64 {
        self.pane(pane)[row * self.camera.width + col]
    }

    /// Value at the pixel containing `a`, `None` off-pane.
    pub fn value_at(&self, pane: Pane, a: Angle2D) -> Option<f64> {
        let (c, r) = self.camera.pixel_at(a)?;
        Some(self.value(pane, c, r))
    }

    /// Largest finite |C| over both panes.
    pub fn max_abs(&self) -> f64 {
        self.stokes
            .iter()
            .chain(&self.anti_stokes)
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// (col, row, value) of the largest finite value on `pane`.
    pub fn argmax(&self, pane: Pane) -> Option<(usize, usize, f64)> {
        let w = self.camera.width;
        self.pane(pane)
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (i % w, i / w, v))
    }
}

pub fn correlation_map(
    acc: &MomentAccumulator,
    camera: &Camera,
) -> Result<CorrelationMap, AnalysisError> {
    if acc.n < 2 {
        return Err(AnalysisError::InsufficientData {
            needed: 2,
            found: acc.n,
        });
    }
    if camera.width != acc.width || camera.height != acc.height {
        return Err(AnalysisError::ShapeMismatch {
            expected: (acc.width, acc.height),
            found: (camera.width, camera.height),
        });
    }
    let grid = |pane| {
        (0..camera.height)
            .flat_map(|r| (0..camera.width).map(move |c| (c, r)))
            .map(|(c, r)| acc.correlation_at(pane, c, r))
            .collect::<Vec<_>>()
    };
    Ok(CorrelationMap {
        camera: *camera,
        stokes: grid(Pane::Stokes),
        anti_stokes: grid(Pane::AntiStokes),
        ref_angle: acc.ref_angle,
        ref_pane: acc.reference.pane(),
        ref_pixels: acc.reference.pixels(camera),
        n_frames: acc.n,
    })
}

/// One row or column of a map, with angle coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub pane: Pane,
    /// Axis along which the profile runs.
    pub axis: Axis,
    /// The other coordinate, snapped to the pixel centre.
    pub fixed: f64,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Nearest row (axis = X) or column (axis = Y) through `through`.
pub fn cross_section(
    map: &CorrelationMap,
    pane: Pane,
    axis: Axis,
    through: Angle2D,
) -> Result<Profile, AnalysisError> {
    let cam = &map.camera;
    let (col, row) = cam.pixel_at(through).ok_or_else(|| {
        AnalysisError::InvalidArgument("cross-section point is off the pane".into())
    })?;
    let centre = cam.pixel_centre(col, row);
    let (fixed, coords, values) = match axis {
        Axis::X => (
            centre.theta_y,
            (0..cam.width)
                .map(|c| cam.pixel_centre(c, row).theta_x)
                .collect(),
            (0..cam.width).map(|c| map.value(pane, c, row)).collect(),
        ),
        Axis::Y => (
            centre.theta_x,
            (0..cam.height)
                .map(|r| cam.pixel_centre(col, r).theta_y)
                .collect(),
            (0..cam.height).map(|r| map.value(pane, col, r)).collect(),
        ),
    };
    Ok(Profile {
        pane,
        axis,
        fixed,
        coords,
        values,
    })
}
