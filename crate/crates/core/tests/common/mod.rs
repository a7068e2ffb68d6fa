//! Closed-form expectations used as oracles by the integration tests.
//!
//! Nothing here calls into the simulator's own geometry or rendering code;
//! the pixel integrals use Simpson quadrature instead of erf.
#![allow(dead_code)]

use std::f64::consts::PI;

use rmns::scattering::Simulator;

/// ∫_a^b N(x; centre, sigma) dx by composite Simpson.
pub fn gaussian_mass(a: f64, b: f64, centre: f64, sigma: f64) -> f64 {
    const N: usize = 200;
    let h = (b - a) / N as f64;
    let f = |x: f64| {
        (-(x - centre).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
    };
    let mut s = f(a) + f(b);
    for i in 1..N {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Pixel (col, row) extent in μrad on a pane of `w × h` pixels of `p` μrad
/// centred on the optical axis.
pub fn pixel_box(col: usize, row: usize, w: usize, h: usize, p: f64) -> ((f64, f64), (f64, f64)) {
    let x0 = (col as f64 - w as f64 / 2.0) * p;
    let y0 = (row as f64 - h as f64 / 2.0) * p;
    ((x0, x0 + p), (y0, y0 + p))
}

pub struct PixelCorrelation {
    pub cov: f64,
    pub var_stokes: f64,
    pub var_anti: f64,
}

impl PixelCorrelation {
    pub fn pearson(&self) -> f64 {
        self.cov / (self.var_stokes * self.var_anti).sqrt()
    }
}

/// Exact second moments of Stokes pixel `s` and anti-Stokes pixel `a` for
/// exponential mode intensities I_m (mean μ_m), twins η_m·I_m, Gaussian
/// profiles and Poisson counting on top of a uniform floor.
///
/// Cov = Σ μ²·η·g·h, Var_S = Σ μ²g² + Σ μg + floor, Var_aS = Σ μ²η²h² + Σ μηh + floor.
pub fn pixel_correlation(
    sim: &Simulator,
    s: (usize, usize),
    a: (usize, usize),
    theta_read: (f64, f64),
) -> PixelCorrelation {
    let cam = &sim.camera;
    let p = cam.pixel_pitch / cam.f3 * 1e6;
    let (w, h) = (cam.width, cam.height);
    let ratio = sim.geom.lambda_read / sim.geom.lambda_write;
    let rm = &sim.retrieval;
    let tw = (sim.modes.theta_write.theta_x, sim.modes.theta_write.theta_y);
    let half = (w as f64 / 2.0 * p, h as f64 / 2.0 * p);
    let on_pane = |x: f64, y: f64| x >= -half.0 && x < half.0 && y >= -half.1 && y < half.1;
    let aberration = (-(theta_read.0.powi(2) + theta_read.1.powi(2))
        / (2.0 * rm.aberration_scale.powi(2)))
    .exp();

    let ((sx0, sx1), (sy0, sy1)) = pixel_box(s.0, s.1, w, h, p);
    let ((ax0, ax1), (ay0, ay1)) = pixel_box(a.0, a.1, w, h, p);
    let (mut cov, mut vs, mut va) = (0.0, rm.noise_floor, rm.noise_floor);
    for m in &sim.modes.modes {
        let (cx, cy) = (m.theta_s.theta_x, m.theta_s.theta_y);
        let sig = m.sigma_mode;
        let g = if on_pane(cx, cy) {
            gaussian_mass(sx0, sx1, cx, sig) * gaussian_mass(sy0, sy1, cy, sig)
        } else {
            0.0
        };
        let (dx, dy) = (tw.0 - cx, tw.1 - cy);
        let k2 = (2.0 * PI * 1e-6 / sim.geom.lambda_write).powi(2) * (dx * dx + dy * dy);
        let eta = rm.eta0 * (-rm.d_diff * k2 * rm.tau_storage).exp() * aberration;
        let (ux, uy) = (dx * ratio + theta_read.0, dy * ratio + theta_read.1);
        let hh = if on_pane(ux, uy) {
            gaussian_mass(ax0, ax1, ux, sig * ratio) * gaussian_mass(ay0, ay1, uy, sig * ratio)
        } else {
            0.0
        };
        let mu = m.mean_photons;
        cov += mu * mu * eta * g * hh;
        vs += mu * mu * g * g + mu * g;
        va += mu * mu * eta * eta * hh * hh + mu * eta * hh;
    }
    PixelCorrelation {
        cov,
        var_stokes: vs,
        var_anti: va,
    }
}

/// 1 − (1 − p)^M
pub fn herald_rate(modes: u64, p: f64) -> f64 {
    1.0 - (1.0 - p).powi(modes as i32)
}

/// Binomial standard error of a proportion estimated from `n` trials.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
