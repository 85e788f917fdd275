use nfcal::calibration::{format_calibration, format_calibration_json, parse_calibration, parse_calibration_json};
use nfcal::capture::{format_depth, format_ppm, parse_depth, parse_intrinsics, parse_ppm};
use nfcal::config::Config;
use nfcal::ply::{format_ply, parse_ply, parse_radar_cloud, radar_cloud_vertices, PlyFormat};
use nfcal_core::registration::RigidCalibration;
use nfcal_core::{Point3, RadarCloud, RigidTransform, Vector3};
use proptest::prelude::*;

fn arb_calibration() -> impl Strategy<Value = RigidCalibration> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..3.1,
        prop::array::uniform3(-2.0f64..2.0),
        0.1f64..10.0,
        prop::collection::vec(0.0f64..0.01, 1..12),
    )
        .prop_filter_map("degenerate axis", |(axis, angle, t, scale, residuals)| {
            let axis = Vector3::from(axis);
            if axis.norm() < 1e-3 {
                return None;
            }
            let transform = RigidTransform::from_axis_angle(axis, angle, Vector3::from(t))
                .with_scale(scale)
                .ok()?;
            RigidCalibration::new(transform, residuals).ok()
        })
}

fn arb_cloud() -> impl Strategy<Value = RadarCloud> {
    prop::collection::vec((prop::array::uniform3(-1.0f64..1.0), 1e-6f64..10.0), 1..60).prop_map(|v| {
        let points = v.iter().map(|(p, _)| Point3::from(*p)).collect();
        let amps: Vec<f64> = v.iter().map(|(_, a)| *a).collect();
        RadarCloud::from_amplitudes(points, &amps).unwrap()
    })
}

proptest! {
    #[test]
    fn calibration_text_round_trip_is_exact(c in arb_calibration()) {
        prop_assert_eq!(parse_calibration(&format_calibration(&c)).unwrap(), c.clone());
        prop_assert_eq!(parse_calibration_json(&format_calibration_json(&c)).unwrap(), c);
    }

    #[test]
    fn radar_ply_round_trip_is_exact(cloud in arb_cloud(), ascii in any::<bool>()) {
        let format = if ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
        let back = parse_radar_cloud(&format_ply(&radar_cloud_vertices(&cloud, format))).unwrap();
        prop_assert_eq!(back.points(), cloud.points());
        prop_assert_eq!(back.confidence(), cloud.confidence());
    }

    #[test]
    fn depth_round_trip_is_exact(w in 1usize..8, h in 1usize..8, seed in any::<u64>()) {
        let depth: Vec<f32> = (0..w * h).map(|k| ((seed.rotate_left(k as u32) % 4000) as f32) * 1e-3).collect();
        let map = parse_depth(&format_depth(w, h, &depth)).unwrap();
        prop_assert_eq!((map.width, map.height), (w, h));
        prop_assert_eq!(map.depth, depth);
    }

    #[test]
    fn ppm_round_trip_is_exact(w in 1usize..8, h in 1usize..8, byte in any::<u8>()) {
        let pixels: Vec<[u8; 3]> = (0..w * h).map(|k| [byte, k as u8, byte ^ k as u8]).collect();
        prop_assert_eq!(parse_ppm(&format_ppm(w, h, &pixels)).unwrap(), (w, h, pixels));
    }

    #[test]
    fn parsers_never_panic_on_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_ply(&bytes);
        let _ = parse_radar_cloud(&bytes);
        let _ = parse_depth(&bytes);
        let _ = parse_ppm(&bytes);
        let _ = parse_intrinsics(&text);
        let _ = parse_calibration(&text);
        let _ = parse_calibration_json(&text);
        let _ = Config::parse(&text, &[]);
    }

    #[test]
    fn headers_with_arbitrary_bodies_never_panic(body in prop::collection::vec(any::<u8>(), 0..256), n in 0u64..u64::MAX) {
        let mut ply = format!("ply\nformat binary_little_endian 1.0\ncomment units m\nelement vertex {n}\nproperty double x\nproperty double y\nproperty double z\nproperty double confidence\nend_header\n").into_bytes();
        ply.extend_from_slice(&body);
        let _ = parse_radar_cloud(&ply);
        let mut depth = format!("NFDEPTH1\n{n} {}\n1\n", n / 3).into_bytes();
        depth.extend_from_slice(&body);
        let _ = parse_depth(&depth);
        let mut ppm = format!("P6\n{n} 2\n255\n").into_bytes();
        ppm.extend_from_slice(&body);
        let _ = parse_ppm(&ppm);
    }
}
