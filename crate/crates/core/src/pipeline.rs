//! Simulate-then-correlate runs shared by the CLI and the test suites.

use crate::analysis::{
    correlation_map, locate_reference_spot, locate_twin_spot, AnalysisError, CorrelationMap,
    FitError, GaussianSpotFit, MomentAccumulator, Reference,
};
use crate::config::ExperimentConfig;
use crate::control::{compensating_readout, ControlError, SteeringCommand};
use crate::geometry::Angle2D;
use crate::rng::sub_seed;
use crate::scattering::{Pane, ScatterError, Schedule, Simulator};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Simulates `n_frames` and splits them into `batches` consecutive
/// accumulators (for jackknife errors). Frames are never held in memory.
pub fn run_batches(
    sim: &Simulator,
    n_frames: usize,
    schedule: &Schedule,
    seed: u64,
    reference: Reference,
    batches: usize,
) -> Result<Vec<MomentAccumulator>, PipelineError> {
    let batches = batches.clamp(1, n_frames.max(1));
    let proto = MomentAccumulator::new(&sim.camera, reference)?;
    let mut out = vec![proto; batches];
    let per = n_frames.div_ceil(batches);
    sim.run::<PipelineError, _>(n_frames, schedule, seed, |f| {
        out[f.shot_index as usize / per].accumulate(&f)?;
        Ok(())
    })?;
    Ok(out)
}

pub fn run_accumulate(
    sim: &Simulator,
    n_frames: usize,
    schedule: &Schedule,
    seed: u64,
    reference: Reference,
) -> Result<MomentAccumulator, PipelineError> {
    Ok(run_batches(sim, n_frames, schedule, seed, reference, 1)?.remove(0))
}

pub fn correlate_run(
    sim: &Simulator,
    n_frames: usize,
    schedule: &Schedule,
    seed: u64,
    reference: Reference,
) -> Result<CorrelationMap, PipelineError> {
    let acc = run_accumulate(sim, n_frames, schedule, seed, reference)?;
    Ok(correlation_map(&acc, &sim.camera)?)
}

/// Least-squares line through (x, y) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn fit_line(points: &[(f64, f64)], through_origin: bool) -> LineFit {
    let n = points.len() as f64;
    if through_origin {
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        return LineFit {
            slope: sxy / sxx,
            intercept: 0.0,
        };
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    LineFit {
        slope,
        intercept: my - slope * mx,
    }
}

/// Mean of the two fitted FWHMs.
pub fn mean_fwhm(fit: &GaussianSpotFit) -> f64 {
    0.5 * (fit.fwhm_x + fit.fwhm_y)
}

/// Stokes-pane virtual-fiber reference.
pub fn fiber_reference(centre: Angle2D, radius: f64) -> Reference {
    Reference::Disc {
        pane: Pane::Stokes,
        centre,
        radius,
    }
}

/// One uncompensated run per reference angle: twin-spot centres for the
/// conjugate-law fit.
#[derive(Debug, Clone)]
pub struct BaselinePoint {
    pub reference: Angle2D,
    pub twin: Result<GaussianSpotFit, FitError<GaussianSpotFit>>,
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub points: Vec<BaselinePoint>,
    /// Slope of twin θ_y against reference θ_y through the origin, if
    /// every fit succeeded.
    pub slope: Option<f64>,
    /// Largest |twin − slope·reference|, μrad.
    pub max_residual: Option<f64>,
    pub max_fwhm: Option<f64>,
}

pub fn conjugate_baseline(
    cfg: &ExperimentConfig,
    sim: &Simulator,
    refs: &[Angle2D],
    n_frames: usize,
    seed: u64,
) -> Result<Baseline, PipelineError> {
    let mut points = Vec::new();
    for (j, &r) in refs.iter().enumerate() {
        let reference = cfg.reference_at(r, &sim.camera)?;
        let map = correlate_run(
            sim,
            n_frames,
            &Schedule::Constant(Angle2D::ZERO),
            sub_seed(seed, 1000 + j as u64),
            reference,
        )?;
        points.push(BaselinePoint {
            reference: map.ref_angle,
            twin: locate_twin_spot(&map, cfg.analysis.window_half_width),
        });
    }
    let fits: Option<Vec<(Angle2D, GaussianSpotFit)>> = points
        .iter()
        .map(|p| p.twin.as_ref().ok().map(|f| (p.reference, *f)))
        .collect();
    let (slope, max_residual, max_fwhm) = match fits {
        Some(f) if f.len() >= 2 => {
            let line = fit_line(
                &f.iter()
                    .map(|(r, t)| (r.theta_y, t.centre.theta_y))
                    .collect::<Vec<_>>(),
                true,
            );
            let res = f
                .iter()
                .map(|(r, t)| (t.centre - *r * line.slope).norm())
                .fold(0.0, f64::max);
            let fw = f.iter().map(|(_, t)| mean_fwhm(t)).fold(0.0, f64::max);
            (Some(line.slope), Some(res), Some(fw))
        }
        _ => (None, None, None),
    };
    Ok(Baseline {
        points,
        slope,
        max_residual,
        max_fwhm,
    })
}

#[derive(Debug, Clone)]
pub enum FiberOutcome {
    Unreachable {
        clamped: SteeringCommand,
        required: Angle2D,
    },
    Ran {
        command: SteeringCommand,
        twin: Result<GaussianSpotFit, FitError<GaussianSpotFit>>,
        reference_spot: Result<GaussianSpotFit, FitError<GaussianSpotFit>>,
    },
}

#[derive(Debug, Clone)]
pub struct FiberReport {
    pub index: usize,
    pub fiber: Angle2D,
    pub outcome: FiberOutcome,
}

impl FiberReport {
    /// Twin within FWHM/4 of the target and Stokes spot within FWHM/4 of
    /// the fiber. `None` when unreachable or a fit failed.
    pub fn verified(&self, target: Angle2D) -> Option<bool> {
        let FiberOutcome::Ran {
            twin: Ok(t),
            reference_spot: Ok(r),
            ..
        } = &self.outcome
        else {
            return None;
        };
        let tol = mean_fwhm(t) / 4.0;
        Some(
            (t.centre - target).norm() < tol && (r.centre - self.fiber).norm() < mean_fwhm(r) / 4.0,
        )
    }

    pub fn twin_error(&self, target: Angle2D) -> Option<f64> {
        match &self.outcome {
            FiberOutcome::Ran { twin: Ok(t), .. } => Some((t.centre - target).norm()),
            _ => None,
        }
    }
}

/// Compensated run for each fiber: steer, simulate, correlate against the
/// fiber, fit both spots.
pub fn steer_fibers(
    cfg: &ExperimentConfig,
    sim: &Simulator,
    fibers: &[Angle2D],
    target: Angle2D,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<FiberReport>, PipelineError> {
    let chain = cfg.optical_chain();
    let mut out = Vec::new();
    for (i, &fiber) in fibers.iter().enumerate() {
        let outcome =
            match compensating_readout(fiber, cfg.theta_write(), target, &chain, &sim.geom) {
                Err(ControlError::Unreachable { clamped, required }) => {
                    FiberOutcome::Unreachable { clamped, required }
                }
                Err(e) => return Err(AnalysisError::InvalidArgument(e.to_string()).into()),
                Ok(command) => {
                    let reference = fiber_reference(fiber, cfg.analysis.fiber_radius);
                    let map = correlate_run(
                        sim,
                        n_frames,
                        &Schedule::Constant(command.theta_read),
                        sub_seed(seed, i as u64),
                        reference,
                    )?;
                    FiberOutcome::Ran {
                        command,
                        twin: locate_twin_spot(&map, cfg.analysis.window_half_width),
                        reference_spot: locate_reference_spot(&map, cfg.analysis.window_half_width),
                    }
                }
            };
        out.push(FiberReport {
            index: i,
            fiber,
            outcome,
        });
    }
    Ok(out)
}
