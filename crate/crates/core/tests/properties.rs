mod common;

use proptest::prelude::*;
use rmns::analysis::{correlation_map, count_modes, MomentAccumulator, Reference};
use rmns::control::{compensating_readout, feasible_region, HeraldConfig};
use rmns::geometry::{
    angle_to_k, angle_to_pixel, aod_chain_angle, k_to_angle, phase_match, pixel_to_angle, Angle2D,
    BeamGeometry, Camera, OpticalChain,
};
use rmns::scattering::{ClipRecord, Frame, Pane, RetrievalModel};

fn geom() -> BeamGeometry {
    BeamGeometry::default()
}

fn camera() -> Camera {
    Camera {
        width: 8,
        height: 6,
        pixel_pitch: 9e-6,
        f3: 0.5,
    }
}

fn angle(limit: f64) -> impl Strategy<Value = Angle2D> {
    (-limit..limit, -limit..limit).prop_map(|(x, y)| Angle2D::new(x, y))
}

fn frame_strategy(cam: Camera) -> impl Strategy<Value = Frame> {
    let n = cam.pixels();
    (
        prop::collection::vec(0u16..200, n),
        prop::collection::vec(0u16..200, n),
    )
        .prop_map(move |(s, a)| Frame {
            width: cam.width,
            height: cam.height,
            stokes: s.into_iter().map(f32::from).collect(),
            anti_stokes: a.into_iter().map(f32::from).collect(),
            shot_index: 0,
            readout_angle: None,
            clip: ClipRecord::default(),
        })
}

fn accumulate(proto: &MomentAccumulator, frames: &[Frame]) -> MomentAccumulator {
    let mut a = proto.empty_like();
    for f in frames {
        a.accumulate(f).unwrap();
    }
    a
}

fn bits(a: &MomentAccumulator) -> Vec<u64> {
    a.sum_i
        .iter()
        .chain(&a.sum_i2)
        .chain(&a.sum_i_ref)
        .chain([&a.sum_ref, &a.sum_ref2])
        .map(|v| v.to_bits())
        .chain([a.n])
        .collect()
}

proptest! {
    #[test]
    fn transverse_k_is_conserved(w in angle(500.0), s in angle(2000.0), r in angle(500.0)) {
        let g = geom();
        let a = phase_match(w, s, r, &g);
        let lhs = angle_to_k(a, g.lambda_read).unwrap();
        let kw = angle_to_k(w, g.lambda_write).unwrap();
        let ks = angle_to_k(s, g.lambda_write).unwrap();
        let kr = angle_to_k(r, g.lambda_read).unwrap();
        let scale = kw.kx.abs() + ks.kx.abs() + kr.kx.abs() + kw.ky.abs() + ks.ky.abs() + kr.ky.abs() + 1.0;
        prop_assert!((lhs.kx - (kw.kx - ks.kx + kr.kx)).abs() < 1e-12 * scale);
        prop_assert!((lhs.ky - (kw.ky - ks.ky + kr.ky)).abs() < 1e-12 * scale);
    }

    #[test]
    fn angle_k_round_trip(a in angle(9000.0), lambda_nm in 400.0f64..1600.0) {
        let back = k_to_angle(angle_to_k(a, lambda_nm * 1e-9).unwrap()).unwrap();
        prop_assert!((back - a).norm() < 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn compensation_lands_on_target(s in angle(400.0), ty in -100.0f64..100.0) {
        let g = geom();
        let chain = OpticalChain::default();
        let target = Angle2D::new(0.0, ty);
        // x is not steered, so only θ_S with the right x component can reach the target
        let s = Angle2D::new(-target.theta_x / g.wavelength_ratio(), s.theta_y);
        let region = feasible_region(&chain, &g, Angle2D::ZERO, target);
        match compensating_readout(s, Angle2D::ZERO, target, &chain, &g) {
            Ok(cmd) => {
                prop_assert!(region.contains(s, &g));
                prop_assert!((cmd.expected_theta_as - target).norm() < 1e-9);
                let realised = phase_match(Angle2D::ZERO, s, aod_chain_angle(cmd.drive, &chain).unwrap(), &g);
                prop_assert!((realised - target).norm() < 1e-6);
            }
            Err(_) => prop_assert!(!region.contains(s, &g)),
        }
    }

    #[test]
    fn drive_round_trip(y in -200.0f64..200.0) {
        let chain = OpticalChain::default();
        let a = Angle2D::new(0.0, y);
        let back = aod_chain_angle(chain.drive_for(a), &chain).unwrap();
        prop_assert!((back - a).norm() < 1e-9);
    }

    #[test]
    fn angle_pixel_inverse(col in 0.0f64..64.0, row in 0.0f64..128.0) {
        let cam = Camera { width: 64, height: 128, pixel_pitch: 9e-6, f3: 0.5 };
        let a = pixel_to_angle(rmns::geometry::PixelCoord { col, row }, &cam);
        let px = angle_to_pixel(a, &cam).unwrap();
        prop_assert!((px.col - col).abs() < 1e-9 && (px.row - row).abs() < 1e-9);
    }

    #[test]
    fn merge_is_associative_and_order_free(
        frames in prop::collection::vec(frame_strategy(camera()), 3..12),
        cut in 1usize..3,
    ) {
        let cam = camera();
        let proto = MomentAccumulator::new(&cam, Reference::Pixel { pane: Pane::Stokes, col: 2, row: 3 }).unwrap();
        let k = cut.min(frames.len() - 2);
        let (a, b, c) = (accumulate(&proto, &frames[..k]), accumulate(&proto, &frames[k..k + 1]), accumulate(&proto, &frames[k + 1..]));
        let mut left = a.clone();
        left.merge(&b).unwrap();
        left.merge(&c).unwrap();
        let mut bc = b.clone();
        bc.merge(&c).unwrap();
        let mut right = a.clone();
        right.merge(&bc).unwrap();
        let mut reversed = c.clone();
        reversed.merge(&b).unwrap();
        reversed.merge(&a).unwrap();
        let whole = accumulate(&proto, &frames);
        prop_assert_eq!(bits(&left), bits(&right));
        prop_assert_eq!(bits(&left), bits(&reversed));
        prop_assert_eq!(bits(&left), bits(&whole));

        let map = correlation_map(&whole, &cam).unwrap();
        prop_assert!(map.max_abs() <= 1.0 + 1e-9);
        let self_c = map.value(Pane::Stokes, 2, 3);
        prop_assert!(self_c.is_nan() || (self_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn herald_probability_bounds(m in 1u64..2000, zeta in 1e-5f64..0.5, ed in 0.01f64..1.0, er in 0.0f64..1.0) {
        let c = HeraldConfig { modes: m, zeta, eta_detect: ed, eta_retrieve: er, ..HeraldConfig::default() };
        let h = c.herald_probability();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!(c.success_probability() <= h + 1e-15);
        prop_assert!((0.0..=1.0).contains(&c.multi_given_herald()));
        let more = HeraldConfig { modes: m + 1, ..c };
        prop_assert!(more.herald_probability() >= h);
        let ideal = HeraldConfig { eta_detect: 1.0, ..c };
        prop_assert!((ideal.herald_probability() - common::herald_rate(m, c.p())).abs() < 1e-12);
    }

    #[test]
    fn retrieval_efficiency_non_increasing(r1 in 0.0f64..3000.0, dr in 0.0f64..1000.0, phi in 0.0f64..std::f64::consts::TAU) {
        let g = geom();
        let rm = RetrievalModel::default();
        let at = |r: f64| rm.efficiency(Angle2D::ZERO, Angle2D::new(r * phi.cos(), r * phi.sin()), Angle2D::ZERO, &g);
        prop_assert!(at(r1 + dr) <= at(r1));
    }

    #[test]
    fn mode_count_scales_quadratically(ex in 240.0f64..2000.0, ey in 240.0f64..2000.0, k in 1.0f64..5.0) {
        let spot = (240.0, 240.0);
        let m0 = 2.0 * ex * ey / (spot.0 * spot.1);
        let m = count_modes((k * ex, k * ey), spot).unwrap() as f64;
        prop_assert!((m - k * k * m0).abs() <= 0.5);
    }
}
