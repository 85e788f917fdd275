use nfcal_core::evaluation::evaluate_alignment;
use nfcal_core::optical::{backproject_circle, detect_circles, filter_circles, fit_spheres_ransac};
use nfcal_core::pipeline::{calibrate, localize_optical, localize_radar, CalibrationParams};
use nfcal_core::registration::{refine_calibration, RigidCalibration};
use nfcal_core::synthetic::{
    render_depth_capture, render_eval_object, render_plate, render_radar_cloud, CameraModel, EvalObject, SceneSampler,
    SceneSpec,
};
use nfcal_core::{Error, Point3, RadarCloud, RigidTransform, TargetGeometry, Vector3};

const DISTANCE: f64 = 0.35;

fn optical_corners(spec: &SceneSpec, geometry: &TargetGeometry) -> [Point3; 4] {
    let pose = spec.optical_target_pose();
    geometry.corner_positions().map(|c| pose.apply(&c))
}

/// Pinhole image of a sphere: the projected center and the radius of the
/// silhouette cone.
fn analytic_circle(camera: &CameraModel, center: &Point3, radius: f64) -> ((f64, f64), f64) {
    let uv = camera.intrinsics.project(center).unwrap();
    let r = camera.intrinsics.fx * radius / (center.coords.norm_squared() - radius * radius).sqrt();
    (uv, r)
}

#[test]
fn hough_matches_analytic_projection() {
    let geometry = TargetGeometry::default();
    let camera = CameraModel::default();
    let spec = SceneSpec::clean(DISTANCE);
    let capture = render_depth_capture(&spec, &geometry, &camera).unwrap();
    let params = CalibrationParams::default();
    let candidates = detect_circles(&capture, params.max_range, &params.hough).unwrap();
    assert!(candidates.len() >= 4);
    let mut top: Vec<_> = candidates.clone();
    top.sort_by(|a, b| b.score.total_cmp(&a.score));
    for center in optical_corners(&spec, &geometry) {
        let ((u, v), r) = analytic_circle(&camera, &center, geometry.styrofoam_radius());
        let c = top[..4]
            .iter()
            .min_by(|a, b| {
                (a.center.0 - u)
                    .hypot(a.center.1 - v)
                    .total_cmp(&(b.center.0 - u).hypot(b.center.1 - v))
            })
            .unwrap();
        assert!(
            (c.center.0 - u).hypot(c.center.1 - v) <= 1.0,
            "center {:?} vs ({u}, {v})",
            c.center
        );
        assert!((c.radius - r).abs() <= 1.0, "radius {} vs {r}", c.radius);
    }
}

#[test]
fn backprojected_samples_lie_on_the_spheres() {
    let geometry = TargetGeometry::default();
    let camera = CameraModel::default();
    let spec = SceneSpec::clean(DISTANCE);
    let capture = render_depth_capture(&spec, &geometry, &camera).unwrap();
    let params = CalibrationParams::default();
    let candidates = detect_circles(&capture, params.max_range, &params.hough).unwrap();
    let circles = filter_circles(&candidates, &capture, &params.circle_filter).unwrap();
    let truth = optical_corners(&spec, &geometry);
    let r = geometry.styrofoam_radius();
    for circle in &circles {
        let samples = backproject_circle(&capture, circle).unwrap();
        let on_sphere = samples
            .points
            .iter()
            .filter(|p| truth.iter().any(|c| ((*p - c).norm() - r).abs() < 5e-4))
            .count();
        assert!(
            on_sphere as f64 >= 0.9 * samples.len() as f64,
            "{on_sphere} of {}",
            samples.len()
        );
    }
}

#[test]
fn noiseless_render_gives_centers_within_a_tenth_of_a_millimeter() {
    let geometry = TargetGeometry::default();
    let camera = CameraModel::default();
    let params = CalibrationParams::default();
    for spec in [SceneSpec::clean(0.30), SceneSpec::clean(0.40)] {
        let capture = render_depth_capture(&spec, &geometry, &camera).unwrap();
        let candidates = detect_circles(&capture, params.max_range, &params.hough).unwrap();
        let circles = filter_circles(&candidates, &capture, &params.circle_filter).unwrap();
        let clouds = circles.each_ref().map(|c| backproject_circle(&capture, c).unwrap());
        let target = fit_spheres_ransac(&clouds, &circles, &geometry, &params.sphere_fit).unwrap();
        for (found, truth) in target.centers.iter().zip(optical_corners(&spec, &geometry)) {
            assert!((found - truth).norm() < 1e-4, "{found} vs {truth}");
        }
    }
}

#[test]
fn clean_radar_scene_is_recovered_exactly() {
    let geometry = TargetGeometry::default();
    let spec = SceneSpec::clean(DISTANCE);
    let cloud = render_radar_cloud(&spec, &geometry).unwrap();
    let result = localize_radar(&cloud, &CalibrationParams::default()).unwrap();
    let truth = spec.ground_truth(&geometry);
    for (found, truth) in result.target.corners.iter().zip(&truth.corners) {
        assert!((found - truth).norm() < 1e-9);
    }
    assert!((result.target.anchor - truth.anchor).norm() < 1e-9);
    assert!(result.target.energy.total < 1e-9);
}

#[test]
fn clean_scene_calibrates_exactly() {
    let geometry = TargetGeometry::default();
    let mut spec = SceneSpec::clean(DISTANCE);
    spec.ground_truth_extrinsic = RigidTransform::from_euler(0.02, -0.03, 0.01, Vector3::new(0.03, -0.02, 0.01));
    let capture = render_depth_capture(&spec, &geometry, &CameraModel::default()).unwrap();
    let cloud = render_radar_cloud(&spec, &geometry).unwrap();
    let report = calibrate(&capture, &cloud, &CalibrationParams::default()).unwrap();
    let t = report.calibration.transform();
    assert!(t.translation_distance_to(&spec.ground_truth_extrinsic) < 1e-4);
    assert!(t.rotation_angle_to(&spec.ground_truth_extrinsic).to_degrees() < 0.02);
    assert!(!report.kabsch.warning);
}

#[test]
fn sampled_scenes_stay_near_ground_truth() {
    let geometry = TargetGeometry::default();
    let camera = CameraModel::default();
    for seed in [1, 2, 3] {
        let spec = SceneSampler::default().sample(seed);
        let capture = render_depth_capture(&spec, &geometry, &camera).unwrap();
        let cloud = render_radar_cloud(&spec, &geometry).unwrap();
        let report = calibrate(&capture, &cloud, &CalibrationParams::default()).unwrap();
        let t = report.calibration.transform();
        assert!(
            t.translation_distance_to(&spec.ground_truth_extrinsic) < 0.005,
            "seed {seed}"
        );
        assert!(
            t.rotation_angle_to(&spec.ground_truth_extrinsic).to_degrees() < 1.0,
            "seed {seed}"
        );
    }
}

#[test]
fn disk_chamfer_floor_and_normal_offset() {
    let spec = SceneSpec::clean(DISTANCE);
    let (capture, cloud) = render_eval_object(&spec, EvalObject::Disk, &CameraModel::default()).unwrap();
    let optical = capture.to_points();
    let floor = evaluate_alignment(&optical, cloud.points(), &RigidTransform::identity())
        .unwrap()
        .chamfer;
    // Sampling-density floor of the default renderer at 0.35 m.
    assert!((floor - 3.036e-4).abs() < 5e-6, "floor {floor}");
    assert!(floor < 5e-4);

    let normal = spec.target_pose.apply_vector(&Vector3::z());
    let shifted = RigidTransform::from_axis_angle(Vector3::z(), 0.0, normal * 0.003);
    let offset = evaluate_alignment(&optical, cloud.points(), &shifted).unwrap().chamfer;
    assert!((offset - 0.003).abs() < 5e-5, "offset chamfer {offset}");
    assert!(offset - floor > 0.0025);
}

#[test]
fn refinement_keeps_a_correct_calibration() {
    let camera = CameraModel::default();
    let mut spec = SceneSampler::default().sample(5);
    spec.optical_noise = 0.0;
    spec.radar_jitter = 0.0;
    let truth = spec.ground_truth_extrinsic;
    let (capture, cloud) = render_plate(&spec, &camera).unwrap();
    let initial = RigidCalibration::new(truth, vec![0.0]).unwrap();
    let refined = refine_calibration(&initial, &capture, &cloud, &CalibrationParams::default().refine).unwrap();
    let t = refined.calibration.transform();
    assert!(t.translation_distance_to(&truth) < 1e-4);
    assert!(t.rotation_angle_to(&truth).to_degrees() < 0.05);
    assert!(refined.refined_rmse <= refined.initial_rmse + 1e-12);
}

#[test]
fn refinement_pulls_a_tilted_offset_calibration_back() {
    let camera = CameraModel::default();
    let spec = SceneSampler::default().sample(8);
    let truth = spec.ground_truth_extrinsic;
    let (capture, cloud) = render_plate(&spec, &camera).unwrap();
    let pose = spec.optical_target_pose();
    let c = pose.apply(&Point3::origin());
    let n = pose.apply_vector(&Vector3::z());
    let axis = pose.apply_vector(&Vector3::x());
    let angle = 1f64.to_radians();
    let tilt = RigidTransform::from_axis_angle(axis, angle, Vector3::zeros());
    let shift = c.coords - tilt.apply(&c).coords - n * 0.005;
    let start = truth.compose(&RigidTransform::from_axis_angle(axis, angle, shift));
    let initial = RigidCalibration::new(start, vec![0.0]).unwrap();
    let refined = refine_calibration(&initial, &capture, &cloud, &CalibrationParams::default().refine).unwrap();
    let t = refined.calibration.transform();
    assert!(t.translation_distance_to(&truth) < 1e-3);
    assert!(t.rotation_angle_to(&truth).to_degrees() < 0.2);
}

#[test]
fn refinement_without_a_plate_does_not_invent_a_correction() {
    let camera = CameraModel::default();
    let spec = SceneSampler::default().sample(5);
    let (capture, _) = render_plate(&spec, &camera).unwrap();
    let clutter: Vec<Point3> = (0..200)
        .map(|k| {
            let a = k as f64 * 0.37;
            Point3::new(0.2 * a.sin(), 0.15 * a.cos(), 0.6 + 0.03 * (3.0 * a).sin())
        })
        .collect();
    let cloud = RadarCloud::from_amplitudes(clutter, &[1.0; 200]).unwrap();
    let initial = RigidCalibration::new(spec.ground_truth_extrinsic, vec![0.0]).unwrap();
    match refine_calibration(&initial, &capture, &cloud, &CalibrationParams::default().refine) {
        Err(Error::InsufficientCorrespondences { .. }) => {}
        Ok(r) => assert!(
            r.calibration
                .transform()
                .translation_distance_to(&spec.ground_truth_extrinsic)
                < 1e-3
        ),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn localization_is_deterministic() {
    let geometry = TargetGeometry::default();
    let spec = SceneSampler::default().sample(9);
    let capture = render_depth_capture(&spec, &geometry, &CameraModel::default()).unwrap();
    let params = CalibrationParams::default();
    assert_eq!(localize_optical(&capture, &params), localize_optical(&capture, &params));
}
