use std::io::{self, Write};

use super::fit::{GaussianSpotFit, ProfileFit};
use super::map::{CorrelationMap, Profile};
use crate::scattering::Pane;
use crate::stamp::RunStamp;

/// `angle_x,angle_y,C` for one pane; NaN written as `NaN`.
pub fn write_map_csv<W: Write>(
    mut w: W,
    map: &CorrelationMap,
    pane: Pane,
    stamp: &RunStamp,
) -> io::Result<()> {
    stamp.write_comments(&mut w)?;
    writeln!(
        w,
        "# pane={} ref_x={} ref_y={} n_frames={}",
        pane.name(),
        map.ref_angle.theta_x,
        map.ref_angle.theta_y,
        map.n_frames
    )?;
    writeln!(w, "angle_x,angle_y,C")?;
    let cam = &map.camera;
    for row in 0..cam.height {
        for col in 0..cam.width {
            let a = cam.pixel_centre(col, row);
            writeln!(
                w,
                "{},{},{}",
                a.theta_x,
                a.theta_y,
                map.value(pane, col, row)
            )?;
        }
    }
    Ok(())
}

fn to_u16(c: f64) -> u16 {
    if c.is_finite() {
        (((c.clamp(-1.0, 1.0) + 1.0) / 2.0) * 65535.0).round() as u16
    } else {
        0
    }
}

/// 16-bit binary PGM, Stokes pane above anti-Stokes. C ∈ [−1, 1] maps
/// linearly onto [0, 65535]; NaN → 0. Provenance goes in a header comment.
pub fn write_map_pgm<W: Write>(mut w: W, map: &CorrelationMap, stamp: &RunStamp) -> io::Result<()> {
    let cam = &map.camera;
    write!(
        w,
        "P5\n# config_checksum={} seed={}\n{} {}\n65535\n",
        stamp.checksum_hex(),
        stamp.seed,
        cam.width,
        2 * cam.height
    )?;
    let mut buf = Vec::with_capacity(4 * cam.pixels());
    for v in map.stokes.iter().chain(&map.anti_stokes) {
        buf.extend_from_slice(&to_u16(*v).to_be_bytes());
    }
    w.write_all(&buf)
}

/// Single-line fit CSV with a named header.
pub fn write_fit_csv<W: Write>(
    mut w: W,
    label: &str,
    fit: &GaussianSpotFit,
    status: &str,
    stamp: &RunStamp,
) -> io::Result<()> {
    writeln!(
        w,
        "label,status,centre_x,centre_y,fwhm_x,fwhm_y,amplitude,offset,rms_residual,iterations,config_checksum,seed"
    )?;
    writeln!(
        w,
        "{label},{status},{},{},{},{},{},{},{},{},{},{}",
        fit.centre.theta_x,
        fit.centre.theta_y,
        fit.fwhm_x,
        fit.fwhm_y,
        fit.amplitude,
        fit.offset,
        fit.rms_residual,
        fit.iterations,
        stamp.checksum_hex(),
        stamp.seed
    )
}

/// Cross-section with the fitted curve alongside when available.
pub fn write_profile_csv<W: Write>(
    mut w: W,
    profile: &Profile,
    fit: Option<&ProfileFit>,
    stamp: &RunStamp,
) -> io::Result<()> {
    stamp.write_comments(&mut w)?;
    let axis = match profile.axis {
        crate::geometry::Axis::X => "x",
        crate::geometry::Axis::Y => "y",
    };
    writeln!(
        w,
        "# pane={} axis={axis} through={}",
        profile.pane.name(),
        profile.fixed
    )?;
    if let Some(f) = fit {
        writeln!(
            w,
            "# fit centre={} fwhm={} amplitude={} offset={}",
            f.centre, f.fwhm, f.amplitude, f.offset
        )?;
    }
    writeln!(w, "angle,C,fit")?;
    for (x, v) in profile.coords.iter().zip(&profile.values) {
        let model = fit.map_or(f64::NAN, |f| f.eval(*x));
        writeln!(w, "{x},{v},{model}")?;
    }
    Ok(())
}
