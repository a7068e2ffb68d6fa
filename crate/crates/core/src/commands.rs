//! The four pipeline commands behind the `rmns` binary.
//!
//! Every command returns its process exit code; human-readable progress goes
//! to the supplied writer.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use thiserror::Error;

use crate::analysis::{
    correlation_map, cross_section, fit_profile, locate_reference_spot, locate_twin_spot,
    write_fit_csv, write_map_csv, write_map_pgm, write_profile_csv, AnalysisError, FitError,
    GaussianSpotFit, MomentAccumulator,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::control::{
    read_schedule_csv, run_herald_protocol, write_schedule_csv, ControlError, HeraldConfig,
};
use crate::geometry::{Angle2D, Axis};
use crate::pipeline::{
    conjugate_baseline, fiber_reference, mean_fwhm, steer_fibers, FiberOutcome, PipelineError,
};
use crate::scattering::{Pane, ScatterError, Schedule, StackHeader, StackReader, StackWriter};
use crate::stamp::RunStamp;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNREACHABLE: i32 = 3;
pub const EXIT_FIT_FAILED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Scatter(e) => e.into(),
            PipelineError::Analysis(e) => e.into(),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::Scatter(ScatterError::InvalidConfig(_))
            | CliError::Usage(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// `<prefix><suffix>`, e.g. `out/run` + `_fit.csv`.
fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn fit_status<T: std::fmt::Debug>(r: &Result<GaussianSpotFit, FitError<T>>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("fit-failed ({e})").replace(',', ";"),
    }
}

fn best_effort(r: &Result<GaussianSpotFit, FitError<GaussianSpotFit>>) -> GaussianSpotFit {
    match r {
        Ok(f) => *f,
        Err(e) => e.best().copied().unwrap_or(GaussianSpotFit {
            centre: Angle2D::new(f64::NAN, f64::NAN),
            fwhm_x: f64::NAN,
            fwhm_y: f64::NAN,
            amplitude: f64::NAN,
            offset: f64::NAN,
            rms_residual: f64::NAN,
            iterations: 0,
            converged: false,
            samples: 0,
        }),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Per-shot readout angles (CSV); constant θ_read = 0 when absent.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Output stack file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_simulate(args: &SimulateArgs, log: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let n = args.frames.unwrap_or(cfg.n_frames);
    if n == 0 {
        return Err(CliError::Usage("--frames must be >= 1".into()));
    }
    let sim = cfg.simulator()?;
    let schedule = match &args.schedule {
        Some(p) => {
            let angles =
                read_schedule_csv(File::open(p).map_err(io_err(p))?, &cfg.optical_chain())?;
            if angles.len() < n {
                return Err(CliError::Usage(format!(
                    "schedule has {} rows, {n} frames requested",
                    angles.len()
                )));
            }
            Schedule::PerShot(angles)
        }
        None => Schedule::Constant(Angle2D::ZERO),
    };
    let header = StackHeader::for_camera(&sim.camera, n, seed, cfg.checksum());
    let mut w = StackWriter::new(create(&args.out)?, header)?;
    sim.run::<ScatterError, _>(n, &schedule, seed, |f| w.write_frame(&f))?;
    w.finish()?;
    writeln!(
        log,
        "config_checksum={:016x} seed={seed} frames={n} out={}",
        header.config_checksum,
        args.out.display()
    )
    .map_err(io_err(Path::new("stdout")))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Args)]
pub struct CorrelateArgs {
    /// Stack file written by `simulate`.
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub ref_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub ref_y: Option<f64>,
    /// Use fiber N of `[steer] fibers` as a disc reference.
    #[arg(long, conflicts_with_all = ["ref_x", "ref_y"])]
    pub fiber: Option<usize>,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_correlate(args: &CorrelateArgs, log: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let mut reader = StackReader::new(BufReader::new(
        File::open(&args.stack).map_err(io_err(&args.stack))?,
    ))?;
    let header = *reader.header();
    let camera = header.camera();
    let reference = match args.fiber {
        Some(i) => {
            let f = cfg
                .fibers()
                .get(i)
                .copied()
                .ok_or_else(|| CliError::Usage(format!("no fiber {i} in [steer] fibers")))?;
            fiber_reference(f.centre, f.radius)
        }
        None => {
            let a = Angle2D::new(
                args.ref_x.unwrap_or(cfg.analysis.ref_x),
                args.ref_y.unwrap_or(cfg.analysis.ref_y),
            );
            cfg.reference_at(a, &camera)
                .map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    let mut acc =
        MomentAccumulator::new(&camera, reference).map_err(|e| CliError::Usage(e.to_string()))?;
    while let Some(frame) = reader.next_frame()? {
        acc.accumulate(&frame)?;
    }
    let map = correlation_map(&acc, &camera)?;

    let mut stamp = cfg.stamp(header.seed);
    stamp.config_checksum = header.config_checksum;
    let hw = cfg.analysis.window_half_width;
    let twin = locate_twin_spot(&map, hw);
    let spot = locate_reference_spot(&map, hw);

    for pane in [Pane::Stokes, Pane::AntiStokes] {
        let p = with_suffix(&args.out, &format!("_{}.csv", pane.name()));
        write_map_csv(create(&p)?, &map, pane, &stamp).map_err(io_err(&p))?;
    }
    let p = with_suffix(&args.out, ".pgm");
    write_map_pgm(create(&p)?, &map, &stamp).map_err(io_err(&p))?;
    for (label, fit) in [("twin", &twin), ("reference", &spot)] {
        let p = with_suffix(&args.out, &format!("_{label}_fit.csv"));
        write_fit_csv(
            create(&p)?,
            label,
            &best_effort(fit),
            &fit_status(fit),
            &stamp,
        )
        .map_err(io_err(&p))?;
    }
    // θ_y cross-sections through the two spot centres
    for (pane, fit, fallback) in [
        (Pane::Stokes, &spot, map.ref_angle),
        (Pane::AntiStokes, &twin, map.ref_angle * -1.0),
    ] {
        let through = fit.as_ref().map(|f| f.centre).unwrap_or(fallback);
        if let Ok(profile) = cross_section(&map, pane, Axis::Y, through) {
            let pf = fit_profile(&profile).ok();
            let p = with_suffix(&args.out, &format!("_{}_profile_y.csv", pane.name()));
            write_profile_csv(create(&p)?, &profile, pf.as_ref(), &stamp).map_err(io_err(&p))?;
        }
    }

    let say =
        |log: &mut dyn Write, s: String| writeln!(log, "{s}").map_err(io_err(Path::new("stdout")));
    say(
        log,
        format!(
            "config_checksum={} seed={} frames={}",
            stamp.checksum_hex(),
            stamp.seed,
            map.n_frames
        ),
    )?;
    for (label, fit) in [("reference spot", &spot), ("twin spot", &twin)] {
        match fit {
            Ok(f) => say(
                log,
                format!(
                    "{label}: centre ({:.2}, {:.2}) μrad, FWHM {:.1} × {:.1} μrad",
                    f.centre.theta_x, f.centre.theta_y, f.fwhm_x, f.fwhm_y
                ),
            )?,
            Err(e) => say(log, format!("{label}: {e}"))?,
        }
    }
    Ok(if twin.is_ok() && spot.is_ok() {
        EXIT_OK
    } else {
        EXIT_FIT_FAILED
    })
}

#[derive(Debug, Clone, Args)]
pub struct SteerArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Frames per fiber run.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub target_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub target_y: Option<f64>,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_steer(args: &SteerArgs, log: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let n = args.frames.unwrap_or(cfg.steer.frames);
    if n < 2 {
        return Err(CliError::Usage("--frames must be >= 2".into()));
    }
    let target = Angle2D::new(
        args.target_x.unwrap_or(cfg.steer.target_x),
        args.target_y.unwrap_or(cfg.steer.target_y),
    );
    target
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let sim = cfg.simulator()?;
    let stamp = cfg.stamp(seed);
    let fibers: Vec<Angle2D> = cfg.fibers().iter().map(|f| f.centre).collect();
    let reports = steer_fibers(&cfg, &sim, &fibers, target, n, seed)?;
    let refs: Vec<Angle2D> = cfg
        .steer
        .baseline_refs
        .iter()
        .map(|&[x, y]| Angle2D::new(x, y))
        .collect();
    let baseline = conjugate_baseline(&cfg, &sim, &refs, n, seed)?;
    let expected_slope = -sim.geom.wavelength_ratio();

    let p = with_suffix(&args.out, "_steer.csv");
    let mut w = create(&p)?;
    let write = |w: &mut BufWriter<File>| -> io::Result<()> {
        stamp.write_comments(w)?;
        writeln!(
            w,
            "# target_x={} target_y={}",
            target.theta_x, target.theta_y
        )?;
        writeln!(
            w,
            "fiber,fiber_x,fiber_y,status,theta_read_x,theta_read_y,drive_x_hz,drive_y_hz,expected_x,expected_y,twin_x,twin_y,twin_fwhm,stokes_x,stokes_y,error,verified"
        )?;
        for r in &reports {
            let (status, cmd, twin, spot) = match &r.outcome {
                FiberOutcome::Unreachable { clamped, .. } => {
                    ("unreachable".to_string(), clamped, None, None)
                }
                FiberOutcome::Ran {
                    command,
                    twin,
                    reference_spot,
                } => {
                    let status = match (twin, reference_spot) {
                        (Ok(_), Ok(_)) => "ok".to_string(),
                        (Err(e), _) | (_, Err(e)) => format!("fit-failed ({e})").replace(',', ";"),
                    };
                    (
                        status,
                        command,
                        Some(best_effort(twin)),
                        Some(best_effort(reference_spot)),
                    )
                }
            };
            let nan = f64::NAN;
            let (tx, ty, tf) = twin.map_or((nan, nan, nan), |t| {
                (t.centre.theta_x, t.centre.theta_y, mean_fwhm(&t))
            });
            let (sx, sy) = spot.map_or((nan, nan), |s| (s.centre.theta_x, s.centre.theta_y));
            writeln!(
                w,
                "{},{},{},{status},{},{},{},{},{},{},{tx},{ty},{tf},{sx},{sy},{},{}",
                r.index,
                r.fiber.theta_x,
                r.fiber.theta_y,
                cmd.theta_read.theta_x,
                cmd.theta_read.theta_y,
                cmd.drive.x,
                cmd.drive.y,
                cmd.expected_theta_as.theta_x,
                cmd.expected_theta_as.theta_y,
                r.twin_error(target).unwrap_or(nan),
                r.verified(target)
                    .map_or("n/a", |v| if v { "pass" } else { "FAIL" }),
            )?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(&p))?;

    let p = with_suffix(&args.out, "_baseline.csv");
    let mut w = create(&p)?;
    let write = |w: &mut BufWriter<File>| -> io::Result<()> {
        stamp.write_comments(w)?;
        let fmt = |v: Option<f64>| v.map_or("NaN".to_string(), |v| v.to_string());
        writeln!(
            w,
            "# slope={} expected={expected_slope} max_residual={}",
            fmt(baseline.slope),
            fmt(baseline.max_residual)
        )?;
        writeln!(w, "ref_x,ref_y,status,twin_x,twin_y,twin_fwhm")?;
        for pt in &baseline.points {
            let t = best_effort(&pt.twin);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                pt.reference.theta_x,
                pt.reference.theta_y,
                fit_status(&pt.twin),
                t.centre.theta_x,
                t.centre.theta_y,
                mean_fwhm(&t)
            )?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(&p))?;

    let commands: Vec<Angle2D> = reports
        .iter()
        .filter_map(|r| match &r.outcome {
            FiberOutcome::Ran { command, .. } => Some(command.theta_read),
            FiberOutcome::Unreachable { .. } => None,
        })
        .collect();
    let p = with_suffix(&args.out, "_schedule.csv");
    write_schedule_csv(create(&p)?, &commands, &cfg.optical_chain(), &stamp)?;

    let unreachable = reports
        .iter()
        .filter(|r| matches!(r.outcome, FiberOutcome::Unreachable { .. }))
        .count();
    let fit_failed = reports
        .iter()
        .filter(|r| matches!(r.outcome, FiberOutcome::Ran { .. }) && r.verified(target).is_none())
        .count()
        + baseline.points.iter().filter(|p| p.twin.is_err()).count();
    let verified = reports
        .iter()
        .filter(|r| r.verified(target) == Some(true))
        .count();
    let out =
        |log: &mut dyn Write, s: String| writeln!(log, "{s}").map_err(io_err(Path::new("stdout")));
    out(
        log,
        format!(
            "config_checksum={} seed={seed} frames_per_run={n}",
            stamp.checksum_hex()
        ),
    )?;
    out(log, format!("fibers: {} total, {verified} within FWHM/4 of target, {unreachable} unreachable, {fit_failed} fit failures", reports.len()))?;
    match baseline.slope {
        Some(s) => out(
            log,
            format!(
                "baseline slope {s:.4} (expected {expected_slope:.4}, |Δ| {:.4})",
                (s - expected_slope).abs()
            ),
        )?,
        None => out(log, "baseline slope unavailable: twin fit failed".into())?,
    }
    Ok(if unreachable > 0 {
        EXIT_UNREACHABLE
    } else if fit_failed > 0 {
        EXIT_FIT_FAILED
    } else {
        EXIT_OK
    })
}

#[derive(Debug, Clone, Args)]
pub struct HeraldArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shots: Option<u64>,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

const SWEEP_MODES: [u64; 3] = [10, 100, 1000];

pub fn cmd_herald(args: &HeraldArgs, log: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let shots = args.shots.unwrap_or(cfg.herald.shots);
    if shots == 0 {
        return Err(CliError::Usage("--shots must be >= 1".into()));
    }
    let hc = cfg.herald_config();
    let stamp = cfg.stamp(seed);
    let stats = run_herald_protocol(&hc, shots, seed)?;

    let p = with_suffix(&args.out, ".csv");
    let mut w = create(&p)?;
    writeln!(
        w,
        "modes,zeta,p,shots,heralds,routed_successes,multi_excitation_events,herald_prob,herald_prob_exact,success_prob,success_prob_exact,multi_given_herald,multi_given_herald_exact,config_checksum,seed"
    )
    .and_then(|_| {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{seed}",
            hc.modes,
            hc.zeta,
            hc.p(),
            stats.shots,
            stats.heralds,
            stats.routed_successes,
            stats.multi_excitation_events,
            stats.herald_prob,
            hc.herald_probability(),
            stats.success_prob,
            hc.success_probability(),
            stats.multi_given_herald,
            hc.multi_given_herald(),
            stamp.checksum_hex(),
        )
    })
    .and_then(|_| w.flush())
    .map_err(io_err(&p))?;

    let p = with_suffix(&args.out, "_sweep.csv");
    let mut w = create(&p)?;
    let write = |w: &mut BufWriter<File>| -> io::Result<()> {
        stamp.write_comments(w)?;
        writeln!(
            w,
            "modes,p,herald_prob_exact,herald_prob_mc,success_prob_exact"
        )?;
        for m in SWEEP_MODES {
            let c = HeraldConfig { modes: m, ..hc };
            let mc = run_herald_protocol(&c, shots, seed)
                .map(|s| s.herald_prob)
                .unwrap_or(f64::NAN);
            writeln!(
                w,
                "{m},{},{},{mc},{}",
                c.p(),
                c.herald_probability(),
                c.success_probability()
            )?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(&p))?;

    writeln!(
        log,
        "config_checksum={} seed={seed} shots={shots} herald_prob={:.6} (exact {:.6}) success_prob={:.6} multi_given_herald={:.6}",
        stamp.checksum_hex(),
        stats.herald_prob,
        hc.herald_probability(),
        stats.success_prob,
        stats.multi_given_herald
    )
    .map_err(io_err(Path::new("stdout")))?;
    Ok(EXIT_OK)
}

/// Stamp for a stack header plus config metadata.
pub fn stack_stamp(header: &StackHeader, cfg: &ExperimentConfig) -> RunStamp {
    let mut s = cfg.stamp(header.seed);
    s.config_checksum = header.config_checksum;
    s
}
