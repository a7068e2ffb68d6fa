//! Experiment configuration: a sectioned TOML file.
//!
//! Angles are μrad throughout; other quantities carry their unit in the key
//! name (`_mm`, `_nm`, `_mhz`, `_us`, ...). Missing keys take the defaults
//! below; unknown keys are rejected. `[metadata]` is free-form, copied into
//! output headers and ignored otherwise.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{Reference, VirtualFiber};
use crate::control::HeraldConfig;
use crate::geometry::{Angle2D, BeamGeometry, Camera, OpticalChain};
use crate::scattering::{
    build_mode_set, ModeParams, Pane, RetrievalModel, ScatterError, Simulator, DEFAULT_D_DIFF,
    DEFAULT_SPOT_CONSTANT,
};
use crate::stamp::RunStamp;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{}: {msg}", line.map_or("config".to_string(), |l| format!("config line {l}")))]
    Parse { line: Option<usize>, msg: String },
    #[error("{}: {key}: {msg}", line.map_or("config".to_string(), |l| format!("config line {l}")))]
    Invalid {
        line: Option<usize>,
        key: String,
        msg: String,
    },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub w0_write_mm: f64,
    pub w0_read_mm: f64,
    pub w0_pump_mm: f64,
    pub cell_length_mm: f64,
    pub lambda_write_nm: f64,
    pub lambda_read_nm: f64,
    pub theta_write_x: f64,
    pub theta_write_y: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            w0_write_mm: 3.5,
            w0_read_mm: 3.5,
            w0_pump_mm: 6.0,
            cell_length_mm: 100.0,
            lambda_write_nm: 795.0,
            lambda_read_nm: 780.0,
            theta_write_x: 0.0,
            theta_write_y: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub f1_mm: f64,
    pub f2_mm: f64,
    pub f3_mm: f64,
    pub base_freq_mhz: f64,
    /// Deflection at the deflector itself.
    pub aod_slope_urad_per_mhz: f64,
    pub band_half_width_mhz: f64,
    pub steer_x: bool,
    pub steer_y: bool,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            f1_mm: 50.0,
            f2_mm: 750.0,
            f3_mm: 500.0,
            base_freq_mhz: 80.0,
            aod_slope_urad_per_mhz: 300.0,
            band_half_width_mhz: 10.0,
            steer_x: false,
            steer_y: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesSection {
    pub gain_shrink: f64,
    pub spot_constant: f64,
    pub envelope_fwhm_x: f64,
    pub envelope_fwhm_y: f64,
    pub mean_photons_per_mode: f64,
    pub grid_factor: f64,
}

impl Default for ModesSection {
    fn default() -> Self {
        let m = ModeParams::default();
        Self {
            gain_shrink: m.gain_shrink,
            spot_constant: DEFAULT_SPOT_CONSTANT,
            envelope_fwhm_x: m.envelope_fwhm_x,
            envelope_fwhm_y: m.envelope_fwhm_y,
            mean_photons_per_mode: m.mean_photons_per_mode,
            grid_factor: m.grid_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub eta0: f64,
    /// m²/s
    pub d_diff: f64,
    pub tau_storage_us: f64,
    pub aberration_scale: f64,
    pub noise_floor: f64,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            eta0: 0.3,
            d_diff: DEFAULT_D_DIFF,
            tau_storage_us: 1.0,
            aberration_scale: 600.0,
            noise_floor: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSection {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_um: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            width: 64,
            height: 128,
            pixel_pitch_um: 9.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Pixel,
    Disc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub ref_x: f64,
    pub ref_y: f64,
    pub reference: ReferenceKind,
    /// Virtual-fiber radius, μrad.
    pub fiber_radius: f64,
    /// Fit window half-width, pixels.
    pub window_half_width: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            ref_x: 9.0,
            ref_y: 9.0,
            reference: ReferenceKind::Pixel,
            fiber_radius: 30.0,
            window_half_width: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteerSection {
    pub target_x: f64,
    pub target_y: f64,
    /// Reference fiber centres `[x, y]` on the Stokes side, μrad.
    pub fibers: Vec<[f64; 2]>,
    /// Uncompensated baseline reference angles for the slope fit.
    pub baseline_refs: Vec<[f64; 2]>,
    /// Frames simulated per fiber.
    pub frames: usize,
}

impl Default for SteerSection {
    fn default() -> Self {
        // x chosen so the target's x needs no deflection on the locked axis
        let x = -54.0 * 795.0 / 780.0;
        Self {
            target_x: 54.0,
            target_y: 6.0,
            fibers: [-180.0, -90.0, 0.0, 90.0, 180.0]
                .iter()
                .map(|&y| [x, y])
                .collect(),
            baseline_refs: [-300.0, -150.0, 0.0, 150.0, 300.0]
                .iter()
                .map(|&y| [9.0, y + 9.0])
                .collect(),
            frames: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeraldSection {
    pub modes: u64,
    /// Mean excitations per mode per shot; 0.01 when neither this nor `p` is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    /// P(n >= 1) = zeta/(1+zeta); must agree with `zeta` when both are set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub eta_retrieve: f64,
    pub eta_detect: f64,
    pub switch_latency_ns: f64,
    pub memory_lifetime_us: f64,
    pub shots: u64,
}

impl Default for HeraldSection {
    fn default() -> Self {
        Self {
            modes: 20,
            zeta: None,
            p: None,
            eta_retrieve: 1.0,
            eta_detect: 1.0,
            switch_latency_ns: 10.0,
            memory_lifetime_us: 1.0,
            shots: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_frames: usize,
    pub geometry: GeometrySection,
    pub chain: ChainSection,
    pub modes: ModesSection,
    pub retrieval: RetrievalSection,
    pub camera: CameraSection,
    pub analysis: AnalysisSection,
    pub steer: SteerSection,
    pub herald: HeraldSection,
    pub metadata: BTreeMap<String, toml::Value>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_frames: 10_000,
            geometry: GeometrySection::default(),
            chain: ChainSection::default(),
            modes: ModesSection::default(),
            retrieval: RetrievalSection::default(),
            camera: CameraSection::default(),
            analysis: AnalysisSection::default(),
            steer: SteerSection::default(),
            herald: HeraldSection::default(),
            metadata: BTreeMap::new(),
        }
    }
}

pub const DEFAULT_ZETA: f64 = 0.01;

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (empty section = top level), if present.
pub fn locate_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if current == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    section_line
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the offending line.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            msg: e.message().trim().to_string(),
        })?;
        cfg.validate()
            .map_err(|(section, key, msg)| ConfigError::Invalid {
                line: locate_key(text, section, key),
                key: if section.is_empty() {
                    key.to_string()
                } else {
                    format!("{section}.{key}")
                },
                msg,
            })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 8 bytes of SHA-256 over the canonical form of everything that
    /// affects results (seed, frame count and metadata excluded).
    pub fn checksum(&self) -> u64 {
        let mut physics = self.clone();
        physics.seed = 0;
        physics.n_frames = 0;
        physics.metadata.clear();
        let digest = Sha256::digest(physics.to_toml().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().unwrap())
    }

    pub fn stamp(&self, seed: u64) -> RunStamp {
        let mut s = RunStamp::new(self.checksum(), seed);
        for (k, v) in &self.metadata {
            let text = match v {
                toml::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            s.metadata.insert(k.clone(), text);
        }
        s
    }

    pub fn beam_geometry(&self) -> BeamGeometry {
        let g = &self.geometry;
        BeamGeometry {
            w0_write: g.w0_write_mm * 1e-3,
            w0_read: g.w0_read_mm * 1e-3,
            w0_pump: g.w0_pump_mm * 1e-3,
            cell_length: g.cell_length_mm * 1e-3,
            lambda_write: g.lambda_write_nm * 1e-9,
            lambda_read: g.lambda_read_nm * 1e-9,
        }
    }

    pub fn theta_write(&self) -> Angle2D {
        Angle2D::new(self.geometry.theta_write_x, self.geometry.theta_write_y)
    }

    pub fn optical_chain(&self) -> OpticalChain {
        let c = &self.chain;
        OpticalChain {
            f1: c.f1_mm * 1e-3,
            f2: c.f2_mm * 1e-3,
            f3: c.f3_mm * 1e-3,
            base_freq: c.base_freq_mhz * 1e6,
            aod_slope: c.aod_slope_urad_per_mhz * 1e-12,
            band_half_width: c.band_half_width_mhz * 1e6,
            steer_x: c.steer_x,
            steer_y: c.steer_y,
        }
    }

    pub fn camera(&self) -> Camera {
        Camera {
            width: self.camera.width,
            height: self.camera.height,
            pixel_pitch: self.camera.pixel_pitch_um * 1e-6,
            f3: self.chain.f3_mm * 1e-3,
        }
    }

    pub fn mode_params(&self) -> ModeParams {
        let m = &self.modes;
        ModeParams {
            gain_shrink: m.gain_shrink,
            spot_constant: m.spot_constant,
            envelope_fwhm_x: m.envelope_fwhm_x,
            envelope_fwhm_y: m.envelope_fwhm_y,
            mean_photons_per_mode: m.mean_photons_per_mode,
            grid_factor: m.grid_factor,
            theta_write: self.theta_write(),
        }
    }

    pub fn retrieval(&self) -> RetrievalModel {
        let r = &self.retrieval;
        RetrievalModel {
            eta0: r.eta0,
            d_diff: r.d_diff,
            tau_storage: r.tau_storage_us * 1e-6,
            aberration_scale: r.aberration_scale,
            noise_floor: r.noise_floor,
        }
    }

    pub fn herald_config(&self) -> HeraldConfig {
        let h = &self.herald;
        let zeta = match (h.zeta, h.p) {
            (Some(z), _) => z,
            (None, Some(p)) => crate::control::zeta_from_p(p),
            (None, None) => DEFAULT_ZETA,
        };
        HeraldConfig {
            modes: h.modes,
            zeta,
            eta_retrieve: h.eta_retrieve,
            eta_detect: h.eta_detect,
            switch_latency: h.switch_latency_ns * 1e-9,
            memory_lifetime: h.memory_lifetime_us * 1e-6,
        }
    }

    pub fn reference_angle(&self) -> Angle2D {
        Angle2D::new(self.analysis.ref_x, self.analysis.ref_y)
    }

    /// Stokes-pane reference at `angle` per the `[analysis]` settings.
    pub fn reference_at(
        &self,
        angle: Angle2D,
        camera: &Camera,
    ) -> Result<Reference, crate::analysis::AnalysisError> {
        match self.analysis.reference {
            ReferenceKind::Pixel => Reference::at_angle(Pane::Stokes, angle, camera),
            ReferenceKind::Disc => Ok(Reference::Disc {
                pane: Pane::Stokes,
                centre: angle,
                radius: self.analysis.fiber_radius,
            }),
        }
    }

    pub fn target(&self) -> Angle2D {
        Angle2D::new(self.steer.target_x, self.steer.target_y)
    }

    pub fn fibers(&self) -> Vec<VirtualFiber> {
        self.steer
            .fibers
            .iter()
            .map(|&[x, y]| VirtualFiber {
                centre: Angle2D::new(x, y),
                radius: self.analysis.fiber_radius,
            })
            .collect()
    }

    pub fn simulator(&self) -> Result<Simulator, ScatterError> {
        let geom = self.beam_geometry();
        let modes = build_mode_set(&geom, &self.mode_params())?;
        Simulator::new(geom, modes, self.retrieval(), self.camera())
    }

    /// Semantic checks as (section, key, message).
    fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        fn positive(
            section: &'static str,
            key: &'static str,
            v: f64,
        ) -> Result<(), (&'static str, &'static str, String)> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err((section, key, format!("{v} must be finite and > 0")))
            }
        }
        fn non_negative(
            section: &'static str,
            key: &'static str,
            v: f64,
        ) -> Result<(), (&'static str, &'static str, String)> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err((section, key, format!("{v} must be finite and >= 0")))
            }
        }
        fn unit(
            section: &'static str,
            key: &'static str,
            v: f64,
        ) -> Result<(), (&'static str, &'static str, String)> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err((section, key, format!("{v} must lie in [0, 1]")))
            }
        }
        fn angle(
            section: &'static str,
            key: &'static str,
            v: f64,
        ) -> Result<(), (&'static str, &'static str, String)> {
            if v.is_finite() && v.abs() < crate::geometry::PARAXIAL_LIMIT_URAD {
                Ok(())
            } else {
                Err((
                    section,
                    key,
                    format!("{v} μrad is outside the paraxial range"),
                ))
            }
        }

        if self.n_frames == 0 {
            return Err(("", "n_frames", "must be >= 1".into()));
        }
        let g = &self.geometry;
        positive("geometry", "w0_write_mm", g.w0_write_mm)?;
        positive("geometry", "w0_read_mm", g.w0_read_mm)?;
        positive("geometry", "w0_pump_mm", g.w0_pump_mm)?;
        positive("geometry", "cell_length_mm", g.cell_length_mm)?;
        positive("geometry", "lambda_write_nm", g.lambda_write_nm)?;
        positive("geometry", "lambda_read_nm", g.lambda_read_nm)?;
        angle("geometry", "theta_write_x", g.theta_write_x)?;
        angle("geometry", "theta_write_y", g.theta_write_y)?;

        let c = &self.chain;
        positive("chain", "f1_mm", c.f1_mm)?;
        positive("chain", "f2_mm", c.f2_mm)?;
        positive("chain", "f3_mm", c.f3_mm)?;
        positive("chain", "base_freq_mhz", c.base_freq_mhz)?;
        positive("chain", "aod_slope_urad_per_mhz", c.aod_slope_urad_per_mhz)?;
        if !(c.band_half_width_mhz >= 0.0) {
            return Err((
                "chain",
                "band_half_width_mhz",
                format!("{} must be >= 0", c.band_half_width_mhz),
            ));
        }

        let m = &self.modes;
        if !(m.gain_shrink >= 1.0 && m.gain_shrink.is_finite()) {
            return Err((
                "modes",
                "gain_shrink",
                format!("{} must be >= 1", m.gain_shrink),
            ));
        }
        positive("modes", "spot_constant", m.spot_constant)?;
        positive("modes", "envelope_fwhm_x", m.envelope_fwhm_x)?;
        positive("modes", "envelope_fwhm_y", m.envelope_fwhm_y)?;
        non_negative("modes", "mean_photons_per_mode", m.mean_photons_per_mode)?;
        if !(m.grid_factor >= 1.0 && m.grid_factor.is_finite()) {
            return Err((
                "modes",
                "grid_factor",
                format!("{} must be >= 1", m.grid_factor),
            ));
        }

        let r = &self.retrieval;
        unit("retrieval", "eta0", r.eta0)?;
        non_negative("retrieval", "d_diff", r.d_diff)?;
        non_negative("retrieval", "tau_storage_us", r.tau_storage_us)?;
        positive("retrieval", "aberration_scale", r.aberration_scale)?;
        non_negative("retrieval", "noise_floor", r.noise_floor)?;

        let cam = &self.camera;
        if cam.width == 0 {
            return Err(("camera", "width", "must be >= 1".into()));
        }
        if cam.height == 0 {
            return Err(("camera", "height", "must be >= 1".into()));
        }
        positive("camera", "pixel_pitch_um", cam.pixel_pitch_um)?;

        let a = &self.analysis;
        angle("analysis", "ref_x", a.ref_x)?;
        angle("analysis", "ref_y", a.ref_y)?;
        non_negative("analysis", "fiber_radius", a.fiber_radius)?;
        if a.window_half_width < 2 {
            return Err((
                "analysis",
                "window_half_width",
                "must be >= 2 (a 5×5 window)".into(),
            ));
        }

        let s = &self.steer;
        angle("steer", "target_x", s.target_x)?;
        angle("steer", "target_y", s.target_y)?;
        for f in s.fibers.iter().chain(&s.baseline_refs) {
            if !f
                .iter()
                .all(|v| v.is_finite() && v.abs() < crate::geometry::PARAXIAL_LIMIT_URAD)
            {
                return Err((
                    "steer",
                    "fibers",
                    format!("{f:?} is outside the paraxial range"),
                ));
            }
        }
        if s.frames < 2 {
            return Err(("steer", "frames", "must be >= 2".into()));
        }

        let h = &self.herald;
        if h.modes == 0 {
            return Err(("herald", "modes", "must be >= 1".into()));
        }
        match (h.zeta, h.p) {
            (None, None) => {}
            (Some(z), p) => {
                non_negative("herald", "zeta", z)?;
                if let Some(p) = p {
                    if !(0.0..1.0).contains(&p) {
                        return Err(("herald", "p", format!("{p} must lie in [0, 1)")));
                    }
                    if (z / (1.0 + z) - p).abs() > 1e-9 {
                        return Err(("herald", "p", format!("p = {p} disagrees with zeta = {z}: expected p = zeta/(1+zeta) = {}", z / (1.0 + z))));
                    }
                }
            }
            (None, Some(p)) => {
                if !(0.0..1.0).contains(&p) {
                    return Err(("herald", "p", format!("{p} must lie in [0, 1)")));
                }
            }
        }
        unit("herald", "eta_retrieve", h.eta_retrieve)?;
        unit("herald", "eta_detect", h.eta_detect)?;
        non_negative("herald", "switch_latency_ns", h.switch_latency_ns)?;
        non_negative("herald", "memory_lifetime_us", h.memory_lifetime_us)?;
        if h.shots == 0 {
            return Err(("herald", "shots", "must be >= 1".into()));
        }

        if let Err(e) = build_mode_set(&self.beam_geometry(), &self.mode_params()) {
            return Err(("modes", "envelope_fwhm_x", e.to_string()));
        }
        Ok(())
    }
}
