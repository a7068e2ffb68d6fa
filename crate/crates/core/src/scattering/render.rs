use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::modes::{ModeSet, ShotIntensities};
use crate::geometry::{angle_to_pixel, phase_match, Angle2D, BeamGeometry, Camera};

/// Which half of the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pane {
    Stokes,
    AntiStokes,
}

impl Pane {
    pub fn index(self) -> usize {
        match self {
            Pane::Stokes => 0,
            Pane::AntiStokes => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pane::Stokes => "stokes",
            Pane::AntiStokes => "anti_stokes",
        }
    }
}

/// Energy bookkeeping for one rendered frame, pre-noise, both panes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClipRecord {
    /// Modes whose centre fell off the pane and were dropped whole.
    pub clipped_modes: u32,
    /// Intensity that did not land on a pixel (dropped modes plus tails).
    pub clipped_energy: f64,
    /// Σ of the pre-noise pixel intensities, background excluded.
    pub rendered_energy: f64,
    /// Σ of the sampled per-mode intensities.
    pub sampled_energy: f64,
}

/// One camera exposure: Stokes and anti-Stokes panes, row-major counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub stokes: Vec<f32>,
    pub anti_stokes: Vec<f32>,
    pub shot_index: u64,
    /// Known for simulated frames, not stored in stack files.
    pub readout_angle: Option<Angle2D>,
    pub clip: ClipRecord,
}

impl Frame {
    pub fn zeros(width: usize, height: usize, shot_index: u64) -> Self {
        Self {
            width,
            height,
            stokes: vec![0.0; width * height],
            anti_stokes: vec![0.0; width * height],
            shot_index,
            readout_angle: None,
            clip: ClipRecord::default(),
        }
    }

    pub fn pane(&self, pane: Pane) -> &[f32] {
        match pane {
            Pane::Stokes => &self.stokes,
            Pane::AntiStokes => &self.anti_stokes,
        }
    }

    pub fn pixel(&self, pane: Pane, col: usize, row: usize) -> f32 {
        self.pane(pane)[row * self.width + col]
    }

    pub fn total(&self, pane: Pane) -> f64 {
        self.pane(pane).iter().map(|&v| v as f64).sum()
    }
}

/// Pixel-integrated footprint of one mode on one pane.
#[derive(Debug, Clone, PartialEq)]
struct Footprint {
    col0: usize,
    wx: Vec<f64>,
    row0: usize,
    wy: Vec<f64>,
    /// Σwx·Σwy, the fraction of the mode's energy that lands on pixels.
    fraction: f64,
}

/// Footprints of every mode on one pane; `None` for modes centred off-pane.
#[derive(Debug, Clone, PartialEq)]
pub struct PaneLayout {
    footprints: Vec<Option<Footprint>>,
}

fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

// Gaussian mass in each [edge_i, edge_{i+1}), trimmed to the support where it
// exceeds 1e-17 of the peak pixel.
fn axis_weights(edges: &[f64], centre: f64, sigma: f64) -> (usize, Vec<f64>) {
    let cdf: Vec<f64> = edges.iter().map(|&e| phi((e - centre) / sigma)).collect();
    let tail: Vec<f64> = edges.iter().map(|&e| phi((centre - e) / sigma)).collect();
    let w: Vec<f64> = (0..edges.len() - 1)
        .map(|i| {
            // difference taken on the side where it does not cancel
            if edges[i] >= centre {
                tail[i] - tail[i + 1]
            } else {
                cdf[i + 1] - cdf[i]
            }
        })
        .collect();
    let peak = w.iter().cloned().fold(0.0, f64::max);
    let cut = peak * 1e-17;
    let first = w.iter().position(|&v| v > cut).unwrap_or(0);
    let last = w.iter().rposition(|&v| v > cut).unwrap_or(0);
    (first, w[first..=last].to_vec())
}

impl PaneLayout {
    pub fn new(centres: impl Iterator<Item = Angle2D>, sigma: f64, camera: &Camera) -> Self {
        let col_edges = camera.col_edges();
        let row_edges = camera.row_edges();
        let footprints = centres
            .map(|c| {
                angle_to_pixel(c, camera)?;
                let (col0, wx) = axis_weights(&col_edges, c.theta_x, sigma);
                let (row0, wy) = axis_weights(&row_edges, c.theta_y, sigma);
                let fraction = wx.iter().sum::<f64>() * wy.iter().sum::<f64>();
                Some(Footprint {
                    col0,
                    wx,
                    row0,
                    wy,
                    fraction,
                })
            })
            .collect();
        Self { footprints }
    }

    pub fn stokes(ms: &ModeSet, camera: &Camera) -> Self {
        Self::new(ms.modes.iter().map(|m| m.theta_s), ms.sigma_mode, camera)
    }

    /// Anti-Stokes centres follow phase matching; the profile keeps its
    /// k-space width, so its angular width scales by λ_read/λ_write.
    pub fn anti_stokes(
        ms: &ModeSet,
        geom: &BeamGeometry,
        theta_read: Angle2D,
        camera: &Camera,
    ) -> Self {
        Self::new(
            ms.modes
                .iter()
                .map(|m| phase_match(ms.theta_write, m.theta_s, theta_read, geom)),
            ms.sigma_mode * geom.wavelength_ratio(),
            camera,
        )
    }

    /// Adds Σ I_m·footprint_m into `out`; returns (rendered, clipped, dropped modes).
    fn deposit(&self, intensities: &[f64], width: usize, out: &mut [f64]) -> (f64, f64, u32) {
        let mut clipped = 0.0;
        let mut dropped = 0;
        for (fp, &i) in self.footprints.iter().zip(intensities) {
            let Some(fp) = fp else {
                clipped += i;
                dropped += 1;
                continue;
            };
            if i == 0.0 {
                continue;
            }
            clipped += i * (1.0 - fp.fraction);
            for (dy, &wy) in fp.wy.iter().enumerate() {
                let row = &mut out[(fp.row0 + dy) * width + fp.col0..][..fp.wx.len()];
                let a = i * wy;
                for (px, &wx) in row.iter_mut().zip(&fp.wx) {
                    *px += a * wx;
                }
            }
        }
        let rendered = out.iter().sum::<f64>();
        (rendered, clipped, dropped)
    }
}

/// Noise-free expected pixel intensities (background excluded) and bookkeeping.
pub fn render_expected(
    shot: &ShotIntensities,
    stokes_layout: &PaneLayout,
    anti_layout: &PaneLayout,
    camera: &Camera,
) -> (Vec<f64>, Vec<f64>, ClipRecord) {
    let n = camera.pixels();
    let mut s = vec![0.0; n];
    let mut a = vec![0.0; n];
    let (rs, cs, ds) = stokes_layout.deposit(&shot.stokes, camera.width, &mut s);
    let (ra, ca, da) = anti_layout.deposit(&shot.anti_stokes, camera.width, &mut a);
    let clip = ClipRecord {
        clipped_modes: ds + da,
        clipped_energy: cs + ca,
        rendered_energy: rs + ra,
        sampled_energy: shot.stokes.iter().sum::<f64>() + shot.anti_stokes.iter().sum::<f64>(),
    };
    (s, a, clip)
}

fn poisson_pane<R: Rng + ?Sized>(expected: &[f64], floor: f64, rng: &mut R) -> Vec<f32> {
    expected
        .iter()
        .map(|&mu| {
            let lambda = mu + floor;
            if lambda > 0.0 {
                Poisson::new(lambda)
                    .map(|d| d.sample(rng) as f32)
                    .unwrap_or(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Images one shot onto both panes: Gaussian mode profiles plus a uniform
/// background, each pixel then Poisson-sampled.
#[allow(clippy::too_many_arguments)]
pub fn render_frame<R: Rng + ?Sized>(
    shot: &ShotIntensities,
    stokes_layout: &PaneLayout,
    anti_layout: &PaneLayout,
    theta_read: Angle2D,
    camera: &Camera,
    noise_floor: f64,
    shot_index: u64,
    rng: &mut R,
) -> Frame {
    let (s, a, clip) = render_expected(shot, stokes_layout, anti_layout, camera);
    let stokes = poisson_pane(&s, noise_floor, rng);
    let anti_stokes = poisson_pane(&a, noise_floor, rng);
    Frame {
        width: camera.width,
        height: camera.height,
        stokes,
        anti_stokes,
        shot_index,
        readout_angle: Some(theta_read),
        clip,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use crate::scattering::modes::{build_mode_set, sample_shot, ModeParams, RetrievalModel};

    fn camera() -> Camera {
        Camera {
            width: 64,
            height: 128,
            pixel_pitch: 9e-6,
            f3: 0.5,
        }
    }

    #[test]
    fn zero_intensity_zero_floor_is_blank() {
        let g = BeamGeometry::default();
        let ms = build_mode_set(&g, &ModeParams::default()).unwrap();
        let cam = camera();
        let shot = ShotIntensities {
            stokes: vec![0.0; ms.len()],
            anti_stokes: vec![0.0; ms.len()],
        };
        let f = render_frame(
            &shot,
            &PaneLayout::stokes(&ms, &cam),
            &PaneLayout::anti_stokes(&ms, &g, Angle2D::ZERO, &cam),
            Angle2D::ZERO,
            &cam,
            0.0,
            0,
            &mut stream(3, Domain::Frames, 0),
        );
        assert!(f.stokes.iter().chain(&f.anti_stokes).all(|&v| v == 0.0));
    }

    #[test]
    fn energy_bookkeeping_balances() {
        let g = BeamGeometry::default();
        let ms = build_mode_set(&g, &ModeParams::default()).unwrap();
        let cam = camera();
        let rm = RetrievalModel::default();
        // push part of the anti-Stokes cone off the pane
        let theta_read = Angle2D::new(0.0, 700.0);
        let shot = sample_shot(&ms, &rm, &g, theta_read, &mut stream(9, Domain::Frames, 1));
        let (_, _, clip) = render_expected(
            &shot,
            &PaneLayout::stokes(&ms, &cam),
            &PaneLayout::anti_stokes(&ms, &g, theta_read, &cam),
            &cam,
        );
        assert!(clip.clipped_modes > 0);
        let total = clip.rendered_energy + clip.clipped_energy;
        assert!(
            (total - clip.sampled_energy).abs() <= 1e-9 * clip.sampled_energy,
            "{clip:?}"
        );
    }

    #[test]
    fn pixel_weights_sum_to_in_pane_mass() {
        let edges: Vec<f64> = (0..=20).map(|i| i as f64 * 10.0 - 100.0).collect();
        let (_, w) = axis_weights(&edges, 3.0, 15.0);
        let mass = phi((100.0 - 3.0) / 15.0) - phi((-100.0 - 3.0) / 15.0);
        assert!((w.iter().sum::<f64>() - mass).abs() < 1e-14);
    }
}
