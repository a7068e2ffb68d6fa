use super::ControlError;
use crate::geometry::{phase_match, Angle2D, Axis, BeamGeometry, DriveFrequencies, OpticalChain};

/// A readout deflection, the drive that produces it, and where the
/// anti-Stokes light then goes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringCommand {
    pub theta_s: Angle2D,
    pub theta_read: Angle2D,
    pub drive: DriveFrequencies,
    pub expected_theta_as: Angle2D,
}

// A locked axis counts as reachable only for numerically zero deflection.
const LOCKED_TOLERANCE: f64 = 1e-6;

fn axis_limit(chain: &OpticalChain, axis: Axis) -> f64 {
    if chain.steers(axis) {
        chain.max_deflection()
    } else {
        0.0
    }
}

fn within(v: f64, limit: f64) -> bool {
    v.abs() <= limit * (1.0 + 1e-12) + LOCKED_TOLERANCE
}

fn command(
    theta_s: Angle2D,
    theta_w: Angle2D,
    theta_read: Angle2D,
    chain: &OpticalChain,
    geom: &BeamGeometry,
) -> SteeringCommand {
    let (lo, hi) = (
        chain.base_freq - chain.band_half_width,
        chain.base_freq + chain.band_half_width,
    );
    // clamp absorbs rounding at the band edge
    let drive = DriveFrequencies {
        x: if chain.steer_x {
            chain.drive_frequency(theta_read.theta_x).clamp(lo, hi)
        } else {
            chain.base_freq
        },
        y: if chain.steer_y {
            chain.drive_frequency(theta_read.theta_y).clamp(lo, hi)
        } else {
            chain.base_freq
        },
    };
    SteeringCommand {
        theta_s,
        theta_read,
        drive,
        expected_theta_as: phase_match(theta_w, theta_s, theta_read, geom),
    }
}

/// Readout angle that sends the twin of a Stokes photon at `theta_s` to
/// `target`: k_r⊥ = k_aS⊥(target) − k_w⊥ + k_S⊥.
///
/// When the deflector band cannot reach it, the error carries the clamped
/// command and the required angle.
pub fn compensating_readout(
    theta_s: Angle2D,
    theta_w: Angle2D,
    target: Angle2D,
    chain: &OpticalChain,
    geom: &BeamGeometry,
) -> Result<SteeringCommand, ControlError> {
    for a in [theta_s, theta_w, target] {
        a.validate()?;
    }
    let required = target - (theta_w - theta_s) * geom.wavelength_ratio();
    let (lx, ly) = (axis_limit(chain, Axis::X), axis_limit(chain, Axis::Y));
    if within(required.theta_x, lx) && within(required.theta_y, ly) {
        let exact = Angle2D::new(
            if chain.steer_x { required.theta_x } else { 0.0 },
            if chain.steer_y { required.theta_y } else { 0.0 },
        );
        return Ok(command(theta_s, theta_w, exact, chain, geom));
    }
    let clamped = Angle2D::new(
        required.theta_x.clamp(-lx, lx),
        required.theta_y.clamp(-ly, ly),
    );
    Err(ControlError::Unreachable {
        clamped: command(theta_s, theta_w, clamped, chain, geom),
        required,
    })
}

/// Axis-aligned box of Stokes angles that can be steered onto a target.
/// Half-extents are infinite for an unbounded band and zero on a locked axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleRegion {
    pub centre: Angle2D,
    pub half_extent_x: f64,
    pub half_extent_y: f64,
}

impl FeasibleRegion {
    pub fn contains(&self, theta_s: Angle2D, geom: &BeamGeometry) -> bool {
        // same test as compensating_readout, in readout-angle units
        let r = geom.wavelength_ratio();
        let d = theta_s - self.centre;
        within(d.theta_x * r, self.half_extent_x * r)
            && within(d.theta_y * r, self.half_extent_y * r)
    }

    pub fn diameter(&self, axis: Axis) -> f64 {
        2.0 * match axis {
            Axis::X => self.half_extent_x,
            Axis::Y => self.half_extent_y,
        }
    }
}

pub fn feasible_region(
    chain: &OpticalChain,
    geom: &BeamGeometry,
    theta_w: Angle2D,
    target: Angle2D,
) -> FeasibleRegion {
    let r = geom.wavelength_ratio();
    FeasibleRegion {
        // θ_S at which no deflection is needed
        centre: theta_w - target * (1.0 / r),
        half_extent_x: axis_limit(chain, Axis::X) / r,
        half_extent_y: axis_limit(chain, Axis::Y) / r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::aod_chain_angle;

    #[test]
    fn axial_case() {
        let cmd = compensating_readout(
            Angle2D::ZERO,
            Angle2D::ZERO,
            Angle2D::ZERO,
            &OpticalChain::default(),
            &BeamGeometry::default(),
        )
        .unwrap();
        assert_eq!(cmd.theta_read, Angle2D::ZERO);
        assert_eq!(cmd.drive, DriveFrequencies { x: 80e6, y: 80e6 });
    }

    #[test]
    fn steered_fiber_hits_target() {
        let g = BeamGeometry::default();
        let chain = OpticalChain::default();
        let target = Angle2D::new(54.0, 6.0);
        let theta_s = Angle2D::new(-54.0 / g.wavelength_ratio(), 180.0);
        let cmd = compensating_readout(theta_s, Angle2D::ZERO, target, &chain, &g).unwrap();
        assert!((cmd.expected_theta_as - target).norm() < 1e-10);
        assert_eq!(cmd.theta_read.theta_x, 0.0);
        let back = aod_chain_angle(cmd.drive, &chain).unwrap();
        assert!(
            (back.theta_y - cmd.theta_read.theta_y).abs() < 1e-12 * cmd.theta_read.theta_y.abs()
        );
    }

    #[test]
    fn out_of_band_is_clamped() {
        let g = BeamGeometry::default();
        let chain = OpticalChain::default();
        let err = compensating_readout(
            Angle2D::new(0.0, 400.0),
            Angle2D::ZERO,
            Angle2D::ZERO,
            &chain,
            &g,
        )
        .unwrap_err();
        let ControlError::Unreachable { clamped, required } = err else {
            panic!()
        };
        assert!((required.theta_y - 400.0 * g.wavelength_ratio()).abs() < 1e-9);
        assert!((clamped.theta_read.theta_y - 200.0).abs() < 1e-9);
        assert!(aod_chain_angle(clamped.drive, &chain).is_ok());
        // locked x axis
        assert!(compensating_readout(
            Angle2D::new(10.0, 0.0),
            Angle2D::ZERO,
            Angle2D::ZERO,
            &chain,
            &g
        )
        .is_err());
    }

    #[test]
    fn region_sizes() {
        let g = BeamGeometry::default();
        let mut chain = OpticalChain::default();
        let reg = feasible_region(&chain, &g, Angle2D::ZERO, Angle2D::ZERO);
        assert!((reg.diameter(Axis::Y) - 400.0 * 795.0 / 780.0).abs() < 1e-9);
        assert_eq!(reg.diameter(Axis::X), 0.0);
        chain.band_half_width = 0.0;
        let point = feasible_region(&chain, &g, Angle2D::ZERO, Angle2D::new(54.0, 6.0));
        assert!(point.contains(point.centre, &g));
        assert!(!point.contains(point.centre + Angle2D::new(0.0, 0.01), &g));
        chain.band_half_width = f64::INFINITY;
        chain.steer_x = true;
        let all = feasible_region(&chain, &g, Angle2D::ZERO, Angle2D::ZERO);
        assert!(all.contains(Angle2D::new(9000.0, -9000.0), &g));
    }
}
