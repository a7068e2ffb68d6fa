use std::f64::consts::{LN_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::ScatterError;
use crate::geometry::{fwhm_to_sigma, spinwave_wavevector, Angle2D, BeamGeometry};

/// Inputs to [`build_mode_set`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// Ratio of write-beam diameter to effective emitting diameter (≥ 1).
    pub gain_shrink: f64,
    /// c in spot FWHM = c·λ/d_eff.
    pub spot_constant: f64,
    /// μrad
    pub envelope_fwhm_x: f64,
    /// μrad
    pub envelope_fwhm_y: f64,
    pub mean_photons_per_mode: f64,
    /// Grid spacing in units of `sigma_mode` (≥ 1).
    pub grid_factor: f64,
    pub theta_write: Angle2D,
}

/// Calibrated so that a 3.5 mm emitting region at 795 nm gives a 240 μrad
/// correlation spot.
pub const DEFAULT_SPOT_CONSTANT: f64 = 1.056_603_773_584_905_6;

impl Default for ModeParams {
    fn default() -> Self {
        Self {
            gain_shrink: 2.0,
            spot_constant: DEFAULT_SPOT_CONSTANT,
            envelope_fwhm_x: 480.0,
            envelope_fwhm_y: 1200.0,
            mean_photons_per_mode: 1e3,
            grid_factor: 1.2,
            theta_write: Angle2D::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Mode centre on the Stokes side, μrad.
    pub theta_s: Angle2D,
    pub mean_photons: f64,
    /// Standard deviation of the Gaussian intensity profile, μrad.
    pub sigma_mode: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub theta_write: Angle2D,
    /// FWHM of the intensity-correlation spot, μrad.
    pub spot_fwhm: f64,
    pub sigma_mode: f64,
    pub envelope_fwhm_x: f64,
    pub envelope_fwhm_y: f64,
    pub grid_spacing_x: f64,
    pub grid_spacing_y: f64,
}

/// d_eff = 2·w0_write/gain_shrink, m.
pub fn effective_source_diameter(geom: &BeamGeometry, gain_shrink: f64) -> f64 {
    2.0 * geom.w0_write / gain_shrink
}

/// c·λ/d, μrad.
pub fn spot_fwhm(spot_constant: f64, wavelength: f64, diameter: f64) -> f64 {
    spot_constant * wavelength / diameter * 1e6
}

/// Solve c·λ/d = target for c.
pub fn calibrate_spot_constant(target_fwhm_urad: f64, diameter: f64, wavelength: f64) -> f64 {
    target_fwhm_urad * 1e-6 * diameter / wavelength
}

fn axis_grid(envelope: f64, min_spacing: f64) -> (Vec<f64>, f64) {
    let n = ((envelope / min_spacing).floor() as usize).max(1);
    let spacing = envelope / n as f64;
    let centres = (0..n)
        .map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) * spacing)
        .collect();
    (centres, spacing)
}

/// Square grid of equally populated modes filling a flat-top envelope.
///
/// Each mode has a Gaussian intensity profile of FWHM spot/√2, so that the
/// intensity-correlation spot (the profile's self-convolution) has FWHM equal
/// to `spot_constant·λ_write/d_eff`.
pub fn build_mode_set(geom: &BeamGeometry, params: &ModeParams) -> Result<ModeSet, ScatterError> {
    geom.validate()?;
    params.theta_write.validate()?;
    let bad = |m: String| Err(ScatterError::InvalidConfig(m));
    if !(params.gain_shrink >= 1.0) {
        return bad(format!("gain_shrink = {} must be >= 1", params.gain_shrink));
    }
    if !(params.spot_constant > 0.0 && params.spot_constant.is_finite()) {
        return bad(format!(
            "spot_constant = {} must be > 0",
            params.spot_constant
        ));
    }
    if !(params.grid_factor >= 1.0 && params.grid_factor.is_finite()) {
        return bad(format!("grid_factor = {} must be >= 1", params.grid_factor));
    }
    if !(params.mean_photons_per_mode >= 0.0 && params.mean_photons_per_mode.is_finite()) {
        return bad(format!(
            "mean_photons_per_mode = {} must be >= 0",
            params.mean_photons_per_mode
        ));
    }
    let d_eff = effective_source_diameter(geom, params.gain_shrink);
    let spot = spot_fwhm(params.spot_constant, geom.lambda_write, d_eff);
    for (name, env) in [
        ("envelope_fwhm_x", params.envelope_fwhm_x),
        ("envelope_fwhm_y", params.envelope_fwhm_y),
    ] {
        if !(env.is_finite() && env >= spot) {
            return bad(format!(
                "{name} = {env} μrad is smaller than one mode ({spot:.1} μrad)"
            ));
        }
    }
    let sigma_mode = fwhm_to_sigma(spot / SQRT_2);
    let min_spacing = params.grid_factor * sigma_mode;
    let (xs, grid_spacing_x) = axis_grid(params.envelope_fwhm_x, min_spacing);
    let (ys, grid_spacing_y) = axis_grid(params.envelope_fwhm_y, min_spacing);
    let mut modes = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            modes.push(Mode {
                theta_s: params.theta_write + Angle2D::new(x, y),
                mean_photons: params.mean_photons_per_mode,
                sigma_mode,
            });
        }
    }
    Ok(ModeSet {
        modes,
        theta_write: params.theta_write,
        spot_fwhm: spot,
        sigma_mode,
        envelope_fwhm_x: params.envelope_fwhm_x,
        envelope_fwhm_y: params.envelope_fwhm_y,
        grid_spacing_x,
        grid_spacing_y,
    })
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Per-axis FWHM of the retrieved (anti-Stokes) mean-intensity profile in
    /// Stokes-side angle units: the flat-top envelope cut by the Gaussian
    /// diffusion factor.
    pub fn readout_envelope_fwhm(&self, rm: &RetrievalModel, geom: &BeamGeometry) -> (f64, f64) {
        let w = rm.diffusion_fwhm(geom);
        (self.envelope_fwhm_x.min(w), self.envelope_fwhm_y.min(w))
    }
}

/// Readout-side model: peak efficiency, diffusion damping, aberration roll-off
/// and a uniform background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalModel {
    pub eta0: f64,
    /// m²/s
    pub d_diff: f64,
    /// s
    pub tau_storage: f64,
    /// μrad
    pub aberration_scale: f64,
    /// photons per pixel
    pub noise_floor: f64,
}

/// Gives a 600 μrad diffusion cut-off at 795 nm after 1 μs of storage.
pub const DEFAULT_D_DIFF: f64 = 0.123_298_408_874_041_4;

impl Default for RetrievalModel {
    fn default() -> Self {
        Self {
            eta0: 0.3,
            d_diff: DEFAULT_D_DIFF,
            tau_storage: 1e-6,
            aberration_scale: 600.0,
            noise_floor: 5.0,
        }
    }
}

impl RetrievalModel {
    pub fn validate(&self) -> Result<(), ScatterError> {
        let bad = |m: String| Err(ScatterError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.eta0) {
            return bad(format!("eta0 = {} must lie in [0, 1]", self.eta0));
        }
        if !(self.d_diff >= 0.0 && self.d_diff.is_finite()) {
            return bad(format!("d_diff = {} must be >= 0", self.d_diff));
        }
        if !(self.tau_storage >= 0.0 && self.tau_storage.is_finite()) {
            return bad(format!("tau_storage = {} must be >= 0", self.tau_storage));
        }
        if !(self.aberration_scale > 0.0) {
            return bad(format!(
                "aberration_scale = {} must be > 0",
                self.aberration_scale
            ));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return bad(format!("noise_floor = {} must be >= 0", self.noise_floor));
        }
        Ok(())
    }

    /// exp(−D·|K|²·τ)
    pub fn diffusion_factor(&self, k_sq: f64) -> f64 {
        (-self.d_diff * k_sq * self.tau_storage).exp()
    }

    /// exp(−|θ_read|²/(2·a²))
    pub fn aberration_factor(&self, theta_read: Angle2D) -> f64 {
        (-theta_read.norm_sq() / (2.0 * self.aberration_scale * self.aberration_scale)).exp()
    }

    /// η_m for a mode centred at `theta_s`.
    pub fn efficiency(
        &self,
        theta_w: Angle2D,
        theta_s: Angle2D,
        theta_read: Angle2D,
        geom: &BeamGeometry,
    ) -> f64 {
        let k = spinwave_wavevector(theta_w, theta_s, geom);
        self.eta0
            * self.diffusion_factor(k.kx * k.kx + k.ky * k.ky)
            * self.aberration_factor(theta_read)
    }

    /// FWHM in Stokes angle of the diffusion factor viewed as a function of
    /// |θ_S − θ_w|, μrad. Infinite without diffusion.
    pub fn diffusion_fwhm(&self, geom: &BeamGeometry) -> f64 {
        let d_tau = self.d_diff * self.tau_storage;
        if d_tau <= 0.0 {
            return f64::INFINITY;
        }
        geom.lambda_write / (2.0 * PI) * (4.0 * LN_2 / d_tau).sqrt() * 1e6
    }
}

/// D such that the diffusion factor has the requested FWHM (μrad) after `tau`.
pub fn calibrate_diffusion(fwhm_urad: f64, geom: &BeamGeometry, tau: f64) -> f64 {
    let w = fwhm_urad * 1e-6;
    4.0 * LN_2 * geom.lambda_write * geom.lambda_write / (4.0 * PI * PI * w * w) / tau
}

/// Per-mode intensities of one shot.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotIntensities {
    pub stokes: Vec<f64>,
    pub anti_stokes: Vec<f64>,
}

/// Thermal single-mode intensities on the write side and their retrieved
/// twins, I_aS = η_m·I_S.
pub fn sample_shot<R: Rng + ?Sized>(
    ms: &ModeSet,
    rm: &RetrievalModel,
    geom: &BeamGeometry,
    theta_read: Angle2D,
    rng: &mut R,
) -> ShotIntensities {
    let mut stokes = Vec::with_capacity(ms.len());
    let mut anti_stokes = Vec::with_capacity(ms.len());
    for mode in &ms.modes {
        let unit: f64 = rng.sample(Exp1);
        let i_s = mode.mean_photons * unit;
        stokes.push(i_s);
        anti_stokes.push(rm.efficiency(ms.theta_write, mode.theta_s, theta_read, geom) * i_s);
    }
    ShotIntensities {
        stokes,
        anti_stokes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sigma_to_fwhm;
    use crate::rng::{stream, Domain};

    #[test]
    fn default_calibration() {
        let g = BeamGeometry::default();
        let ms = build_mode_set(&g, &ModeParams::default()).unwrap();
        assert!((effective_source_diameter(&g, 2.0) - 3.5e-3).abs() < 1e-15);
        assert!((ms.spot_fwhm - 240.0).abs() < 1e-9);
        assert!((sigma_to_fwhm(ms.sigma_mode) * SQRT_2 - 240.0).abs() < 1e-9);
        assert!(ms.grid_spacing_x >= ms.sigma_mode && ms.grid_spacing_y >= ms.sigma_mode);
        assert_eq!(ms.len(), 5 * 13);
        assert!(ms.modes.iter().all(|m| m.mean_photons == 1e3));
        let c = calibrate_spot_constant(240.0, 3.5e-3, 795e-9);
        assert!((c - DEFAULT_SPOT_CONSTANT).abs() < 1e-15);
    }

    #[test]
    fn grid_is_centred_and_regular() {
        let ms = build_mode_set(&BeamGeometry::default(), &ModeParams::default()).unwrap();
        let sx: f64 = ms.modes.iter().map(|m| m.theta_s.theta_x).sum();
        let sy: f64 = ms.modes.iter().map(|m| m.theta_s.theta_y).sum();
        assert!(sx.abs() < 1e-9 && sy.abs() < 1e-9);
        let max_y = ms
            .modes
            .iter()
            .map(|m| m.theta_s.theta_y)
            .fold(f64::MIN, f64::max);
        assert!((max_y + ms.grid_spacing_y / 2.0 - ms.envelope_fwhm_y / 2.0).abs() < 1e-9);
    }

    #[test]
    fn envelope_smaller_than_mode_rejected() {
        let p = ModeParams {
            envelope_fwhm_x: 100.0,
            ..ModeParams::default()
        };
        assert!(matches!(
            build_mode_set(&BeamGeometry::default(), &p),
            Err(ScatterError::InvalidConfig(_))
        ));
        let p = ModeParams {
            gain_shrink: 0.5,
            ..ModeParams::default()
        };
        assert!(build_mode_set(&BeamGeometry::default(), &p).is_err());
    }

    #[test]
    fn ideal_retrieval_gives_identical_twins() {
        let g = BeamGeometry::default();
        let ms = build_mode_set(&g, &ModeParams::default()).unwrap();
        let rm = RetrievalModel {
            eta0: 1.0,
            d_diff: 0.0,
            aberration_scale: f64::INFINITY,
            ..Default::default()
        };
        let shot = sample_shot(
            &ms,
            &rm,
            &g,
            Angle2D::new(0.0, 150.0),
            &mut stream(1, Domain::Frames, 0),
        );
        assert_eq!(shot.stokes, shot.anti_stokes);
    }

    #[test]
    fn diffusion_calibration_round_trip() {
        let g = BeamGeometry::default();
        let d = calibrate_diffusion(600.0, &g, 1e-6);
        assert!((d - DEFAULT_D_DIFF).abs() < 1e-12);
        let rm = RetrievalModel::default();
        assert!((rm.diffusion_fwhm(&g) - 600.0).abs() < 1e-9);
        // half efficiency at half the cut-off
        let eta = rm.efficiency(Angle2D::ZERO, Angle2D::new(0.0, 300.0), Angle2D::ZERO, &g);
        assert!((eta / rm.eta0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn efficiency_non_increasing_with_angle() {
        let g = BeamGeometry::default();
        let rm = RetrievalModel::default();
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let e = rm.efficiency(
                Angle2D::ZERO,
                Angle2D::new(0.0, i as f64 * 20.0),
                Angle2D::ZERO,
                &g,
            );
            assert!(e <= last);
            last = e;
        }
    }
}
