//! Deterministic paraxial optics.
//!
//! Angles are carried in microradians throughout; transverse wavevectors in
//! rad/m. The coordinate chain is: AOD drive frequency → deflection at the
//! deflector → 4f relay (angle demagnified by f1/f2) → crossing angle in the
//! cell → far-field position on the camera (x = f3·θ).

use std::f64::consts::{LN_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stokes (write-in, D1) carrier wavelength.
pub const LAMBDA_STOKES: f64 = 795e-9;
/// Anti-Stokes (readout, D2) carrier wavelength.
pub const LAMBDA_ANTI_STOKES: f64 = 780e-9;
/// Paraxial validity guard on |θ|, μrad.
pub const PARAXIAL_LIMIT_URAD: f64 = 1e4;

const URAD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("drive frequency {freq} Hz outside AOD band [{lo}, {hi}] Hz")]
    OutOfBand { freq: f64, lo: f64, hi: f64 },
}

/// Far-field direction in microradians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Angle2D {
    pub theta_x: f64,
    pub theta_y: f64,
}

impl Angle2D {
    pub const ZERO: Angle2D = Angle2D {
        theta_x: 0.0,
        theta_y: 0.0,
    };

    pub const fn new(theta_x: f64, theta_y: f64) -> Self {
        Self { theta_x, theta_y }
    }

    pub fn norm(&self) -> f64 {
        self.theta_x.hypot(self.theta_y)
    }

    pub fn norm_sq(&self) -> f64 {
        self.theta_x * self.theta_x + self.theta_y * self.theta_y
    }

    pub fn is_finite(&self) -> bool {
        self.theta_x.is_finite() && self.theta_y.is_finite()
    }

    /// Finite and inside the paraxial guard.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.is_finite() {
            return Err(GeometryError::InvalidArgument(format!(
                "non-finite angle ({}, {})",
                self.theta_x, self.theta_y
            )));
        }
        if self.norm() >= PARAXIAL_LIMIT_URAD {
            return Err(GeometryError::InvalidArgument(format!(
                "angle |θ| = {} μrad exceeds paraxial limit",
                self.norm()
            )));
        }
        Ok(())
    }

    pub fn component(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.theta_x,
            Axis::Y => self.theta_y,
        }
    }
}

impl Add for Angle2D {
    type Output = Angle2D;
    fn add(self, rhs: Angle2D) -> Angle2D {
        Angle2D::new(self.theta_x + rhs.theta_x, self.theta_y + rhs.theta_y)
    }
}

impl Sub for Angle2D {
    type Output = Angle2D;
    fn sub(self, rhs: Angle2D) -> Angle2D {
        Angle2D::new(self.theta_x - rhs.theta_x, self.theta_y - rhs.theta_y)
    }
}

impl Neg for Angle2D {
    type Output = Angle2D;
    fn neg(self) -> Angle2D {
        Angle2D::new(-self.theta_x, -self.theta_y)
    }
}

impl Mul<f64> for Angle2D {
    type Output = Angle2D;
    fn mul(self, rhs: f64) -> Angle2D {
        Angle2D::new(self.theta_x * rhs, self.theta_y * rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Transverse part of a wavevector, tied to the carrier it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseWavevector {
    /// rad/m
    pub kx: f64,
    /// rad/m
    pub ky: f64,
    /// m
    pub wavelength: f64,
}

impl Add for TransverseWavevector {
    type Output = TransverseWavevector;
    /// Components add; the carrier of the left operand is kept.
    fn add(self, rhs: Self) -> Self {
        Self {
            kx: self.kx + rhs.kx,
            ky: self.ky + rhs.ky,
            wavelength: self.wavelength,
        }
    }
}

impl Sub for TransverseWavevector {
    type Output = TransverseWavevector;
    fn sub(self, rhs: Self) -> Self {
        Self {
            kx: self.kx - rhs.kx,
            ky: self.ky - rhs.ky,
            wavelength: self.wavelength,
        }
    }
}

/// Small-angle map k⊥ = 2π·θ/λ.
pub fn angle_to_k(a: Angle2D, wavelength: f64) -> Result<TransverseWavevector, GeometryError> {
    if !a.is_finite() || !wavelength.is_finite() {
        return Err(GeometryError::InvalidArgument(
            "non-finite angle or wavelength".into(),
        ));
    }
    if wavelength <= 0.0 {
        return Err(GeometryError::InvalidArgument(format!(
            "wavelength {wavelength} must be > 0"
        )));
    }
    let scale = 2.0 * PI * URAD / wavelength;
    Ok(TransverseWavevector {
        kx: a.theta_x * scale,
        ky: a.theta_y * scale,
        wavelength,
    })
}

/// Inverse of [`angle_to_k`] at the wavevector's own carrier.
pub fn k_to_angle(k: TransverseWavevector) -> Result<Angle2D, GeometryError> {
    if !(k.kx.is_finite() && k.ky.is_finite() && k.wavelength.is_finite()) || k.wavelength <= 0.0 {
        return Err(GeometryError::InvalidArgument(
            "non-finite wavevector".into(),
        ));
    }
    let scale = k.wavelength / (2.0 * PI * URAD);
    Ok(Angle2D::new(k.kx * scale, k.ky * scale))
}

/// Beam sizes (1/e² radii), cell length and carrier wavelengths, all in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub w0_write: f64,
    pub w0_read: f64,
    pub w0_pump: f64,
    pub cell_length: f64,
    pub lambda_write: f64,
    pub lambda_read: f64,
}

impl Default for BeamGeometry {
    fn default() -> Self {
        Self {
            w0_write: 3.5e-3,
            w0_read: 3.5e-3,
            w0_pump: 6.0e-3,
            cell_length: 0.1,
            lambda_write: LAMBDA_STOKES,
            lambda_read: LAMBDA_ANTI_STOKES,
        }
    }
}

impl BeamGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let fields = [
            ("w0_write", self.w0_write),
            ("w0_read", self.w0_read),
            ("w0_pump", self.w0_pump),
            ("cell_length", self.cell_length),
            ("lambda_write", self.lambda_write),
            ("lambda_read", self.lambda_read),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::InvalidArgument(format!(
                    "{name} = {v} must be finite and > 0"
                )));
            }
        }
        Ok(())
    }

    /// λ_read/λ_write: the factor mapping a Stokes-side angle to the
    /// anti-Stokes side at equal transverse wavevector.
    pub fn wavelength_ratio(&self) -> f64 {
        self.lambda_read / self.lambda_write
    }
}

/// Delayed phase matching, k_aS⊥ = k_w⊥ − k_S⊥ + k_r⊥.
///
/// Write and Stokes angles are converted at λ_write, the readout angle at
/// λ_read, and the result is returned as an angle at λ_read.
pub fn phase_match(
    theta_w: Angle2D,
    theta_s: Angle2D,
    theta_r: Angle2D,
    geom: &BeamGeometry,
) -> Angle2D {
    let ratio = geom.wavelength_ratio();
    (theta_w - theta_s) * ratio + theta_r
}

/// Transverse wavevector stored in the spinwave, K = k_w⊥ − k_S⊥ (rad/m).
pub fn spinwave_wavevector(
    theta_w: Angle2D,
    theta_s: Angle2D,
    geom: &BeamGeometry,
) -> TransverseWavevector {
    let scale = 2.0 * PI * URAD / geom.lambda_write;
    let d = theta_w - theta_s;
    TransverseWavevector {
        kx: d.theta_x * scale,
        ky: d.theta_y * scale,
        wavelength: geom.lambda_write,
    }
}

/// AOD pair, 4f relay and far-field lens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalChain {
    /// m
    pub f1: f64,
    /// m
    pub f2: f64,
    /// m
    pub f3: f64,
    /// Hz
    pub base_freq: f64,
    /// Deflection at the deflector per unit drive-frequency offset, rad/Hz.
    pub aod_slope: f64,
    /// Half-width of the usable drive band around `base_freq`, Hz.
    pub band_half_width: f64,
    pub steer_x: bool,
    pub steer_y: bool,
}

impl Default for OpticalChain {
    fn default() -> Self {
        Self {
            f1: 0.050,
            f2: 0.750,
            f3: 0.500,
            base_freq: 80e6,
            aod_slope: 3e-10,
            band_half_width: 10e6,
            steer_x: false,
            steer_y: true,
        }
    }
}

/// Drive frequencies of the crossed deflector pair, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveFrequencies {
    pub x: f64,
    pub y: f64,
}

impl OpticalChain {
    pub fn validate(&self) -> Result<(), GeometryError> {
        for (name, v) in [("f1", self.f1), ("f2", self.f2), ("f3", self.f3)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::InvalidArgument(format!(
                    "{name} = {v} must be > 0"
                )));
            }
        }
        if !(self.aod_slope.is_finite() && self.aod_slope > 0.0) {
            return Err(GeometryError::InvalidArgument(format!(
                "aod_slope = {} must be > 0",
                self.aod_slope
            )));
        }
        if !(self.base_freq.is_finite() && self.base_freq > 0.0) {
            return Err(GeometryError::InvalidArgument(format!(
                "base_freq = {} must be > 0",
                self.base_freq
            )));
        }
        if !(self.band_half_width >= 0.0) {
            return Err(GeometryError::InvalidArgument(format!(
                "band_half_width = {} must be >= 0",
                self.band_half_width
            )));
        }
        Ok(())
    }

    /// Angular demagnification of the relay, f1/f2.
    pub fn demagnification(&self) -> f64 {
        self.f1 / self.f2
    }

    /// Cell-plane deflection per Hz of drive offset, μrad/Hz.
    pub fn cell_slope(&self) -> f64 {
        self.aod_slope * self.demagnification() / URAD
    }

    pub fn steers(&self, axis: Axis) -> bool {
        match axis {
            Axis::X => self.steer_x,
            Axis::Y => self.steer_y,
        }
    }

    /// Largest |deflection| reachable at the cell on a steered axis, μrad.
    pub fn max_deflection(&self) -> f64 {
        self.cell_slope() * self.band_half_width
    }

    /// Cell-plane deflection for one deflector, μrad.
    pub fn deflection(&self, axis: Axis, drive_freq: f64) -> Result<f64, GeometryError> {
        if !drive_freq.is_finite() {
            return Err(GeometryError::InvalidArgument(
                "non-finite drive frequency".into(),
            ));
        }
        let (lo, hi) = if self.steers(axis) {
            (
                self.base_freq - self.band_half_width,
                self.base_freq + self.band_half_width,
            )
        } else {
            (self.base_freq, self.base_freq)
        };
        if drive_freq < lo || drive_freq > hi {
            return Err(GeometryError::OutOfBand {
                freq: drive_freq,
                lo,
                hi,
            });
        }
        Ok(self.cell_slope() * (drive_freq - self.base_freq))
    }

    /// Inverse of [`OpticalChain::deflection`] without the band check.
    pub fn drive_frequency(&self, deflection_urad: f64) -> f64 {
        self.base_freq + deflection_urad / self.cell_slope()
    }

    pub fn drive_for(&self, theta_read: Angle2D) -> DriveFrequencies {
        DriveFrequencies {
            x: self.drive_frequency(theta_read.theta_x),
            y: self.drive_frequency(theta_read.theta_y),
        }
    }

    pub fn base_drive(&self) -> DriveFrequencies {
        DriveFrequencies {
            x: self.base_freq,
            y: self.base_freq,
        }
    }
}

/// Readout crossing angle at the cell centre for a pair of drive frequencies.
/// The crossing point is imaged by the relay, so only the angle changes.
pub fn aod_chain_angle(
    drive: DriveFrequencies,
    chain: &OpticalChain,
) -> Result<Angle2D, GeometryError> {
    Ok(Angle2D::new(
        chain.deflection(Axis::X, drive.x)?,
        chain.deflection(Axis::Y, drive.y)?,
    ))
}

/// One camera pane. Angle (0,0) maps to the pane centre; columns run along
/// θx and rows along θy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    /// m
    pub pixel_pitch: f64,
    /// m
    pub f3: f64,
}

/// Continuous pixel coordinates; pixel (i, j) spans [i, i+1) × [j, j+1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub col: f64,
    pub row: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidArgument(
                "pane dimensions must be non-zero".into(),
            ));
        }
        if !(self.pixel_pitch.is_finite()
            && self.pixel_pitch > 0.0
            && self.f3.is_finite()
            && self.f3 > 0.0)
        {
            return Err(GeometryError::InvalidArgument(
                "pixel pitch and f3 must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Angular size of one pixel, μrad.
    pub fn urad_per_pixel(&self) -> f64 {
        self.pixel_pitch / self.f3 / URAD
    }

    /// Angle of the pixel centre.
    pub fn pixel_centre(&self, col: usize, row: usize) -> Angle2D {
        pixel_to_angle(
            PixelCoord {
                col: col as f64 + 0.5,
                row: row as f64 + 0.5,
            },
            self,
        )
    }

    /// Pixel containing `a`, if on the pane.
    pub fn pixel_at(&self, a: Angle2D) -> Option<(usize, usize)> {
        angle_to_pixel(a, self).map(|p| (p.col.floor() as usize, p.row.floor() as usize))
    }

    /// Column edges in μrad, `width + 1` values.
    pub fn col_edges(&self) -> Vec<f64> {
        let p = self.urad_per_pixel();
        (0..=self.width)
            .map(|i| (i as f64 - self.width as f64 / 2.0) * p)
            .collect()
    }

    pub fn row_edges(&self) -> Vec<f64> {
        let p = self.urad_per_pixel();
        (0..=self.height)
            .map(|j| (j as f64 - self.height as f64 / 2.0) * p)
            .collect()
    }
}

/// Far-field position, x = f3·θ, in pixel units. `None` marks an off-pane angle.
pub fn angle_to_pixel(a: Angle2D, camera: &Camera) -> Option<PixelCoord> {
    if !a.is_finite() {
        return None;
    }
    let p = camera.urad_per_pixel();
    let col = camera.width as f64 / 2.0 + a.theta_x / p;
    let row = camera.height as f64 / 2.0 + a.theta_y / p;
    let inside =
        col >= 0.0 && col < camera.width as f64 && row >= 0.0 && row < camera.height as f64;
    inside.then_some(PixelCoord { col, row })
}

pub fn pixel_to_angle(px: PixelCoord, camera: &Camera) -> Angle2D {
    let p = camera.urad_per_pixel();
    Angle2D::new(
        (px.col - camera.width as f64 / 2.0) * p,
        (px.row - camera.height as f64 / 2.0) * p,
    )
}

/// Far-field displacement on the sensor for a given angle, m.
pub fn far_field_displacement(theta_urad: f64, f3: f64) -> f64 {
    f3 * theta_urad * URAD
}

/// F = w0²/(λ·L) for the write beam.
pub fn fresnel_number(geom: &BeamGeometry) -> f64 {
    geom.w0_write * geom.w0_write / (geom.lambda_write * geom.cell_length)
}

/// Angular precision of the stored spinwave wavevector, λ_write/w0_write, μrad.
pub fn spinwave_angular_precision(geom: &BeamGeometry) -> f64 {
    geom.lambda_write / geom.w0_write / URAD
}

/// FWHM of a Gaussian with standard deviation `sigma`.
pub fn sigma_to_fwhm(sigma: f64) -> f64 {
    sigma * 2.0 * (2.0 * LN_2).sqrt()
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}
