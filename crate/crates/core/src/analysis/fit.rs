use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::map::{CorrelationMap, Profile};
use crate::geometry::{fwhm_to_sigma, sigma_to_fwhm, Angle2D};
use crate::scattering::Pane;

pub const MAX_ITERATIONS: usize = 100;
pub const STEP_TOLERANCE: f64 = 1e-8;
/// Fit window half-width used by the spot locators, pixels.
pub const DEFAULT_WINDOW_HALF_WIDTH: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpotFit {
    pub centre: Angle2D,
    pub fwhm_x: f64,
    pub fwhm_y: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileFit {
    pub centre: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ProfileFit {
    pub fn eval(&self, x: f64) -> f64 {
        let s = fwhm_to_sigma(self.fwhm);
        self.amplitude * (-(x - self.centre).powi(2) / (2.0 * s * s)).exp() + self.offset
    }
}

/// `Failed` carries the best-effort parameters.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FitError<T: std::fmt::Debug> {
    #[error("fit needs at least {needed} valid samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("fit failed: {reason}")]
    Failed { reason: String, best: T },
}

impl<T: std::fmt::Debug> FitError<T> {
    pub fn best(&self) -> Option<&T> {
        match self {
            FitError::Failed { best, .. } => Some(best),
            FitError::TooFewSamples { .. } => None,
        }
    }
}

struct Outcome {
    params: Vec<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
}

/// Gauss–Newton, falling back to Levenberg damping whenever the plain step
/// does not reduce the cost. Numeric central-difference Jacobian.
fn least_squares<F>(model: F, n_obs: usize, ys: &[f64], p0: &[f64], scales: &[f64]) -> Outcome
where
    F: Fn(&[f64], usize) -> f64,
{
    let np = p0.len();
    let residuals =
        |p: &[f64]| DVector::from_iterator(n_obs, (0..n_obs).map(|i| ys[i] - model(p, i)));
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 0.0;
    for it in 1..=MAX_ITERATIONS {
        let mut jac = DMatrix::<f64>::zeros(n_obs, np);
        for j in 0..np {
            let h = 1e-6 * p[j].abs().max(scales[j]);
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[j] += h;
            lo[j] -= h;
            for i in 0..n_obs {
                jac[(i, j)] = (model(&hi, i) - model(&lo, i)) / (2.0 * h);
            }
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * &r;
        let mut accepted = None;
        loop {
            let mut m = a.clone();
            for j in 0..np {
                m[(j, j)] += lambda * a[(j, j)].max(1e-300);
            }
            if let Some(step) = m.lu().solve(&g) {
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let rt = residuals(&trial);
                let ct = rt.norm_squared();
                if ct.is_finite() && ct <= cost {
                    accepted = Some((trial, rt, ct, step));
                    break;
                }
            }
            lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
            if lambda > 1e12 {
                break;
            }
        }
        let Some((trial, rt, ct, step)) = accepted else {
            // no direction lowers the cost: stationary point
            return Outcome {
                params: p,
                cost,
                iterations: it,
                converged: true,
            };
        };
        let small = step
            .iter()
            .enumerate()
            .all(|(j, d)| d.abs() <= STEP_TOLERANCE * trial[j].abs().max(scales[j]));
        p = trial;
        r = rt;
        cost = ct;
        lambda = if lambda < 1e-6 { 0.0 } else { lambda / 10.0 };
        if small {
            return Outcome {
                params: p,
                cost,
                iterations: it,
                converged: true,
            };
        }
    }
    Outcome {
        params: p,
        cost,
        iterations: MAX_ITERATIONS,
        converged: false,
    }
}

/// Model parameters: amplitude, x0, y0, σx, σy, offset.
fn gauss2(p: &[f64], x: f64, y: f64) -> f64 {
    let dx = (x - p[1]) / p[3];
    let dy = (y - p[2]) / p[4];
    p[0] * (-0.5 * (dx * dx + dy * dy)).exp() + p[5]
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Initial parameters: centre from the centroid of the top 5% of samples,
/// offset from the median, width from the area above half maximum.
pub fn initial_guess_2d(samples: &[(Angle2D, f64)], pixel_area: f64) -> [f64; 6] {
    let mut vals: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let offset = median(&mut vals);
    let peak = vals.last().copied().unwrap_or(0.0);
    let k = ((samples.len() as f64 * 0.05).ceil() as usize).max(1);
    let mut sorted: Vec<&(Angle2D, f64)> = samples.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (sx, sy) = sorted[..k]
        .iter()
        .fold((0.0, 0.0), |(x, y), s| (x + s.0.theta_x, y + s.0.theta_y));
    let half = offset + 0.5 * (peak - offset);
    let above = samples.iter().filter(|s| s.1 > half).count().max(1) as f64;
    let sigma = (above * pixel_area / (2.0 * std::f64::consts::PI * std::f64::consts::LN_2)).sqrt();
    [
        peak - offset,
        sx / k as f64,
        sy / k as f64,
        sigma,
        sigma,
        offset,
    ]
}

/// Least-squares 2D Gaussian + offset fit to `(angle, value)` samples.
pub fn fit_gaussian_2d(
    samples: &[(Angle2D, f64)],
    p0: [f64; 6],
) -> Result<GaussianSpotFit, FitError<GaussianSpotFit>> {
    if samples.len() < 25 {
        return Err(FitError::TooFewSamples {
            needed: 25,
            found: samples.len(),
        });
    }
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let amp_scale = p0[0].abs().max(1e-12);
    let len_scale = p0[3].abs().max(p0[4].abs()).max(1e-12);
    let scales = [
        amp_scale, len_scale, len_scale, len_scale, len_scale, amp_scale,
    ];
    let out = least_squares(
        |p, i| gauss2(p, samples[i].0.theta_x, samples[i].0.theta_y),
        samples.len(),
        &ys,
        &p0,
        &scales,
    );
    let p = &out.params;
    let fit = GaussianSpotFit {
        centre: Angle2D::new(p[1], p[2]),
        fwhm_x: sigma_to_fwhm(p[3].abs()),
        fwhm_y: sigma_to_fwhm(p[4].abs()),
        amplitude: p[0],
        offset: p[5],
        rms_residual: (out.cost / samples.len() as f64).sqrt(),
        iterations: out.iterations,
        converged: out.converged,
        samples: samples.len(),
    };
    let (xmin, xmax, ymin, ymax) = samples.iter().fold(
        (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ),
        |(a, b, c, d), s| {
            (
                a.min(s.0.theta_x),
                b.max(s.0.theta_x),
                c.min(s.0.theta_y),
                d.max(s.0.theta_y),
            )
        },
    );
    let reason = if !out.converged {
        Some(format!("no convergence in {MAX_ITERATIONS} iterations"))
    } else if !p.iter().all(|v| v.is_finite()) || fit.fwhm_x == 0.0 || fit.fwhm_y == 0.0 {
        Some("non-finite or degenerate parameters".to_string())
    } else if fit.amplitude <= 0.0 {
        Some("non-positive amplitude".to_string())
    } else if fit.amplitude < 3.0 * fit.rms_residual {
        Some(format!(
            "amplitude {:.3e} below 3 × rms residual {:.3e}",
            fit.amplitude, fit.rms_residual
        ))
    } else if !(xmin..=xmax).contains(&fit.centre.theta_x)
        || !(ymin..=ymax).contains(&fit.centre.theta_y)
    {
        Some("centre outside the fit window".to_string())
    } else {
        None
    };
    match reason {
        Some(reason) => Err(FitError::Failed { reason, best: fit }),
        None => Ok(fit),
    }
}

/// Least-squares 1D Gaussian + offset fit.
pub fn fit_gaussian_1d(coords: &[f64], values: &[f64]) -> Result<ProfileFit, FitError<ProfileFit>> {
    let pts: Vec<(f64, f64)> = coords
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_finite())
        .map(|(&c, &v)| (c, v))
        .collect();
    if pts.len() < 7 {
        return Err(FitError::TooFewSamples {
            needed: 7,
            found: pts.len(),
        });
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let offset = median(&mut vals);
    let (xpk, peak) = pts
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let half = offset + 0.5 * (peak - offset);
    let step = (pts[pts.len() - 1].0 - pts[0].0).abs() / (pts.len() - 1) as f64;
    let above = pts.iter().filter(|p| p.1 > half).count().max(1) as f64;
    let p0 = [peak - offset, xpk, fwhm_to_sigma(above * step), offset];
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let a = p0[0].abs().max(1e-12);
    let l = p0[2].abs().max(1e-12);
    let out = least_squares(
        |p, i| p[0] * (-(pts[i].0 - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp() + p[3],
        pts.len(),
        &ys,
        &p0,
        &[a, l, l, a],
    );
    let p = &out.params;
    let fit = ProfileFit {
        centre: p[1],
        fwhm: sigma_to_fwhm(p[2].abs()),
        amplitude: p[0],
        offset: p[3],
        rms_residual: (out.cost / pts.len() as f64).sqrt(),
        iterations: out.iterations,
        converged: out.converged,
    };
    let reason = if !out.converged {
        Some(format!("no convergence in {MAX_ITERATIONS} iterations"))
    } else if !p.iter().all(|v| v.is_finite()) || fit.fwhm == 0.0 {
        Some("non-finite or degenerate parameters".to_string())
    } else if fit.amplitude <= 0.0 || fit.amplitude < 3.0 * fit.rms_residual {
        Some("amplitude not significant".to_string())
    } else {
        None
    };
    match reason {
        Some(reason) => Err(FitError::Failed { reason, best: fit }),
        None => Ok(fit),
    }
}

pub fn fit_profile(profile: &Profile) -> Result<ProfileFit, FitError<ProfileFit>> {
    fit_gaussian_1d(&profile.coords, &profile.values)
}

/// Finite, unmasked samples of `pane` in a square window around `seed`.
pub fn window_samples(
    map: &CorrelationMap,
    pane: Pane,
    seed: Angle2D,
    half_width: usize,
    mask: &[(usize, usize)],
) -> Vec<(Angle2D, f64)> {
    let cam = &map.camera;
    let upp = cam.urad_per_pixel();
    let c0 = (seed.theta_x / upp + cam.width as f64 / 2.0).floor() as i64;
    let r0 = (seed.theta_y / upp + cam.height as f64 / 2.0).floor() as i64;
    let hw = half_width as i64;
    let mut out = Vec::new();
    for r in (r0 - hw).max(0)..=(r0 + hw).min(cam.height as i64 - 1) {
        for c in (c0 - hw).max(0)..=(c0 + hw).min(cam.width as i64 - 1) {
            let (c, r) = (c as usize, r as usize);
            let v = map.value(pane, c, r);
            if v.is_finite() && !mask.contains(&(c, r)) {
                out.push((cam.pixel_centre(c, r), v));
            }
        }
    }
    out
}

/// Windowed spot fit seeded at `seed`.
pub fn fit_spot(
    map: &CorrelationMap,
    pane: Pane,
    seed: Angle2D,
    half_width: usize,
    mask: &[(usize, usize)],
) -> Result<GaussianSpotFit, FitError<GaussianSpotFit>> {
    let samples = window_samples(map, pane, seed, half_width, mask);
    if samples.len() < 25 {
        return Err(FitError::TooFewSamples {
            needed: 25,
            found: samples.len(),
        });
    }
    let upp = map.camera.urad_per_pixel();
    fit_gaussian_2d(&samples, initial_guess_2d(&samples, upp * upp))
}

/// Twin spot: fit on the anti-Stokes pane seeded at its global maximum.
pub fn locate_twin_spot(
    map: &CorrelationMap,
    half_width: usize,
) -> Result<GaussianSpotFit, FitError<GaussianSpotFit>> {
    let Some((c, r, _)) = map.argmax(Pane::AntiStokes) else {
        return Err(FitError::TooFewSamples {
            needed: 25,
            found: 0,
        });
    };
    fit_spot(
        map,
        Pane::AntiStokes,
        map.camera.pixel_centre(c, r),
        half_width,
        &[],
    )
}

/// Stokes–Stokes spot around the reference, with the reference pixels masked.
pub fn locate_reference_spot(
    map: &CorrelationMap,
    half_width: usize,
) -> Result<GaussianSpotFit, FitError<GaussianSpotFit>> {
    let mask: &[(usize, usize)] = if map.ref_pane == Pane::Stokes {
        &map.ref_pixels
    } else {
        &[]
    };
    fit_spot(map, Pane::Stokes, map.ref_angle, half_width, mask)
}
