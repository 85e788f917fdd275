//! Optical-to-radar registration: closed-form Kabsch on ordered center pairs
//! and RANSAC refinement on projective correspondences of a flat plate.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Rotation3, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Unused whenever std is linked in, which provides the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{fit_plane_tls, Matrix3, Plane, Point3, RigidTransform, Vector3};
use crate::ransac::{AcceptanceRule, Score};
use crate::sensor::{DepthCapture, RadarCloud};

/// Where a set of correspondences came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrespondenceSource {
    TargetCenters,
    ProjectiveRefinement,
}

/// Ordered `(optical, radar)` point pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(Point3, Point3)>,
    pub source: CorrespondenceSource,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<(Point3, Point3)>, source: CorrespondenceSource) -> Self {
        Self { pairs, source }
    }

    /// Pairs the i-th optical center with the i-th radar center.
    pub fn from_centers(optical: &[Point3], radar: &[Point3]) -> Result<Self> {
        if optical.len() != radar.len() {
            return Err(Error::validation(
                "correspondences",
                format!("{} optical vs {} radar points", optical.len(), radar.len()),
            ));
        }
        let pairs = optical.iter().copied().zip(radar.iter().copied()).collect();
        Ok(Self::new(pairs, CorrespondenceSource::TargetCenters))
    }
}

/// Optical-to-radar transform with the residuals of the pairs it was fit on.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidCalibration {
    transform: RigidTransform,
    residual_rmse: f64,
    per_point_residuals: Vec<f64>,
}

/// Tolerance between a stored RMSE and the RMS of the stored residuals.
pub const RMSE_TOLERANCE: f64 = 1e-12;

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|r| r * r).sum::<f64>() / values.len() as f64).sqrt()
}

impl RigidCalibration {
    /// Derives the RMSE from the residuals.
    pub fn new(transform: RigidTransform, per_point_residuals: Vec<f64>) -> Result<Self> {
        let residual_rmse = rms(&per_point_residuals);
        Self::from_parts(transform, residual_rmse, per_point_residuals)
    }

    /// Checks that `residual_rmse` is the RMS of the residuals.
    pub fn from_parts(transform: RigidTransform, residual_rmse: f64, per_point_residuals: Vec<f64>) -> Result<Self> {
        let transform = RigidTransform::new(*transform.rotation(), *transform.translation(), transform.scale())?;
        if let Some(r) = per_point_residuals.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::validation("calibration", format!("invalid residual {r}")));
        }
        let expected = rms(&per_point_residuals);
        if !((residual_rmse - expected).abs() <= RMSE_TOLERANCE) {
            return Err(Error::validation(
                "calibration",
                format!("residual_rmse {residual_rmse} is not the RMS of the residuals ({expected})"),
            ));
        }
        Ok(Self {
            transform,
            residual_rmse,
            per_point_residuals,
        })
    }

    pub fn transform(&self) -> &RigidTransform {
        &self.transform
    }

    pub fn residual_rmse(&self) -> f64 {
        self.residual_rmse
    }

    pub fn per_point_residuals(&self) -> &[f64] {
        &self.per_point_residuals
    }
}

/// Singular-value sanity check of a Kabsch solve.
///
/// For noiseless pairs the singular values of the cross-covariance equal the
/// eigenvalues of the scaled optical scatter; a larger deviation means the
/// two sets do not differ by a rotation at scale `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KabschDiagnostics {
    /// Descending.
    pub singular_values: [f64; 3],
    /// Descending eigenvalues of the scaled, centered optical scatter.
    pub expected: [f64; 3],
    /// Largest `|σ_i − λ_i|` relative to `λ_1`.
    pub relative_deviation: f64,
    pub warning: bool,
}

/// Relative singular-value deviation above which a solve is flagged.
pub const SINGULAR_VALUE_WARNING: f64 = 0.1;

fn descending(mut v: [f64; 3]) -> [f64; 3] {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Least-squares rotation and translation with `r ≈ R·(S·o) + t`.
pub fn kabsch_register(pairs: &CorrespondenceSet, scale: f64) -> Result<RigidCalibration> {
    kabsch_register_detailed(pairs, scale).map(|(calib, _)| calib)
}

pub fn kabsch_register_detailed(
    pairs: &CorrespondenceSet,
    scale: f64,
) -> Result<(RigidCalibration, KabschDiagnostics)> {
    let (transform, diagnostics) = solve(&pairs.pairs, scale)?;
    if diagnostics.warning {
        log::warn!(
            "kabsch: singular values {:?} deviate from the optical spread {:?} by {:.1}%",
            diagnostics.singular_values,
            diagnostics.expected,
            100.0 * diagnostics.relative_deviation
        );
    }
    let residuals = residuals(&transform, &pairs.pairs);
    Ok((RigidCalibration::new(transform, residuals)?, diagnostics))
}

fn residuals(transform: &RigidTransform, pairs: &[(Point3, Point3)]) -> Vec<f64> {
    pairs.iter().map(|(o, r)| (transform.apply(o) - r).norm()).collect()
}

fn solve(pairs: &[(Point3, Point3)], scale: f64) -> Result<(RigidTransform, KabschDiagnostics)> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::validation("scale", format!("{scale} must be positive")));
    }
    if pairs.len() < 3 {
        return Err(Error::DegenerateGeometry("registration needs at least three pairs"));
    }
    let n = pairs.len() as f64;
    let mut o_mean = Vector3::zeros();
    let mut r_mean = Vector3::zeros();
    for (o, r) in pairs {
        o_mean += o.coords * scale;
        r_mean += r.coords;
    }
    o_mean /= n;
    r_mean /= n;

    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (o, r) in pairs {
        let oc = o.coords * scale - o_mean;
        let rc = r.coords - r_mean;
        h += rc * oc.transpose();
        spread += oc * oc.transpose();
    }
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::validation("correspondences", "non-finite coordinates"));
    }

    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let sv = svd.singular_values;
    let sorted = descending([sv[0], sv[1], sv[2]]);
    if !(sorted[0] > 0.0) || sorted[1] <= 1e-12 * sorted[0] {
        return Err(Error::DegenerateGeometry("correspondences are collinear or coincident"));
    }

    // Reflection correction acts on the weakest direction.
    let weakest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).expect("three values");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(weakest, weakest)] = -1.0;
    }
    let rotation = u * d * v_t;
    let translation = r_mean - rotation * o_mean;

    let eig = SymmetricEigen::new(spread);
    let expected = descending([eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]]);
    let relative_deviation =
        (0..3).map(|i| (sorted[i] - expected[i]).abs()).fold(0.0, f64::max) / expected[0].max(f64::MIN_POSITIVE);
    let diagnostics = KabschDiagnostics {
        singular_values: sorted,
        expected,
        relative_deviation,
        warning: relative_deviation > SINGULAR_VALUE_WARNING,
    };

    Ok((RigidTransform::new(rotation, translation, scale)?, diagnostics))
}

/// Parameters of the projective plate refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub iterations: usize,
    pub inlier_threshold: f64,
    /// Max 3D gap of a projective pair and the RANSAC inlier residual (m).
    pub correspondence_gate: f64,
    pub min_correspondences: usize,
    pub sample_size: usize,
    /// Re-association rounds; each round runs a full RANSAC.
    pub rounds: usize,
    pub seed: u64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            iterations: 100,
            inlier_threshold: 0.05,
            correspondence_gate: 0.010,
            min_correspondences: 20,
            sample_size: 4,
            rounds: 5,
            seed: 0,
        }
    }
}

/// Outcome of [`refine_calibration`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub calibration: RigidCalibration,
    pub correspondences: usize,
    pub inliers: usize,
    /// RMSE of the final inliers under the initial and refined transforms.
    pub initial_rmse: f64,
    pub refined_rmse: f64,
    pub rounds: usize,
}

/// Projective correspondences: each radar point is mapped into the optical
/// frame, projected to the nearest integer pixel and paired with that
/// pixel's back-projected depth if the two lie within the gate.
pub fn projective_correspondences(
    calibration: &RigidTransform,
    capture: &DepthCapture,
    cloud: &RadarCloud,
    gate: f64,
) -> CorrespondenceSet {
    let to_optical = calibration.inverse();
    let intrinsics = capture.intrinsics();
    let mut pairs = Vec::new();
    for r in cloud.points() {
        let p = to_optical.apply(r);
        let Some((u, v)) = intrinsics.project(&p) else {
            continue;
        };
        let (u, v) = (u.round(), v.round());
        if !(u >= 0.0 && v >= 0.0) {
            continue;
        }
        let Some(o) = capture.point_at(u as usize, v as usize) else {
            continue;
        };
        if (calibration.apply(&o) - r).norm() < gate {
            pairs.push((o, *r));
        }
    }
    CorrespondenceSet::new(pairs, CorrespondenceSource::ProjectiveRefinement)
}

fn inlier_score(transform: &RigidTransform, pairs: &[(Point3, Point3)], gate: f64) -> (Score, Vec<usize>) {
    let mut inliers = Vec::new();
    let mut sum = 0.0;
    for (i, (o, r)) in pairs.iter().enumerate() {
        let d = (transform.apply(o) - r).norm();
        if d < gate {
            inliers.push(i);
            sum += d * d;
        }
    }
    let error = if inliers.is_empty() {
        f64::INFINITY
    } else {
        (sum / inliers.len() as f64).sqrt()
    };
    let score = Score {
        inlier_ratio: inliers.len() as f64 / pairs.len() as f64,
        error,
    };
    (score, inliers)
}

fn subset(pairs: &[(Point3, Point3)], idx: &[usize]) -> Vec<(Point3, Point3)> {
    idx.iter().map(|&i| pairs[i]).collect()
}

/// Restricts the step from `current` to `refit` to what a flat plate
/// constrains: tilts about the plate centroid and motion along its normal.
fn observable_update(current: &RigidTransform, refit: &RigidTransform, plate: &Plane) -> RigidTransform {
    let n = *plate.normal();
    let c = plate.reference().coords;
    let step = refit.compose(&current.inverse());
    let omega = Rotation3::from_matrix_unchecked(*step.rotation()).scaled_axis();
    let tilt = Rotation3::new(omega - n * omega.dot(&n));
    let shift = step.rotation() * c + step.translation() - c;
    let translation = c + n * shift.dot(&n) - tilt * c;
    RigidTransform::new(*tilt.matrix(), translation, 1.0).map_or(*refit, |d| d.compose(current))
}

/// Refines an initial calibration with a flat plate seen by both sensors.
///
/// A planar plate only constrains the plate normal offset and the two tilts;
/// translation within the plate and rotation about its normal stay at the
/// initial values.
pub fn refine_calibration(
    initial: &RigidCalibration,
    plate_capture: &DepthCapture,
    plate_cloud: &RadarCloud,
    params: &RefineParams,
) -> Result<Refinement> {
    let gate = params.correspondence_gate;
    let rule = AcceptanceRule::new(params.inlier_threshold);
    let scale = initial.transform().scale();
    let sample_size = params.sample_size.max(3);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut current = *initial.transform();
    let mut last = None;
    let mut rounds = 0;
    for _ in 0..params.rounds.max(1) {
        let set = projective_correspondences(&current, plate_capture, plate_cloud, gate);
        let pairs = &set.pairs;
        if pairs.len() < params.min_correspondences.max(sample_size) {
            if last.is_some() {
                break;
            }
            return Err(Error::InsufficientCorrespondences {
                found: pairs.len(),
                required: params.min_correspondences.max(sample_size),
            });
        }
        rounds += 1;

        let mut best: Option<(Score, RigidTransform, Vec<usize>)> = None;
        for _ in 0..params.iterations {
            let idx = rand::seq::index::sample(&mut rng, pairs.len(), sample_size).into_vec();
            let Ok((candidate, _)) = solve(&subset(pairs, &idx), scale) else {
                continue;
            };
            let (score, inliers) = inlier_score(&candidate, pairs, gate);
            if rule.prefers(score, best.as_ref().map(|b| b.0)) {
                best = Some((score, candidate, inliers));
            }
        }
        let Some((_, _, inliers)) = best else {
            return Err(Error::DegenerateGeometry("every refinement sample was degenerate"));
        };
        if inliers.len() < sample_size {
            return Err(Error::InsufficientCorrespondences {
                found: inliers.len(),
                required: sample_size,
            });
        }
        let inlier_pairs = subset(pairs, &inliers);
        let (refit, _) = solve(&inlier_pairs, scale)?;
        let plate: Vec<Point3> = inlier_pairs.iter().map(|p| p.1).collect();
        let refit = match fit_plane_tls(&plate) {
            Ok(plane) => observable_update(&current, &refit, &plane),
            Err(_) => refit,
        };
        let before = rms(&residuals(&current, &inlier_pairs));
        let after = rms(&residuals(&refit, &inlier_pairs));
        // The refit is least squares over these pairs, so it only loses to
        // the incoming transform through round-off.
        let (next, next_rmse) = if after <= before {
            (refit, after)
        } else {
            (current, before)
        };
        let step = next.translation_distance_to(&current) + next.rotation_angle_to(&current) * 0.1;
        let initial_rmse = rms(&residuals(initial.transform(), &inlier_pairs));
        last = Some((next, inlier_pairs, pairs.len(), initial_rmse, next_rmse));
        current = next;
        if step < 1e-7 {
            break;
        }
    }

    let (transform, inlier_pairs, correspondences, initial_rmse, refined_rmse) = last.expect("at least one round ran");
    let calibration = RigidCalibration::new(transform, residuals(&transform, &inlier_pairs))?;
    Ok(Refinement {
        calibration,
        correspondences,
        inliers: inlier_pairs.len(),
        initial_rmse,
        refined_rmse,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        RigidTransform::from_axis_angle(axis, rng.random_range(-3.1..3.1), t)
    }

    fn mapped(points: &[Point3], t: &RigidTransform) -> CorrespondenceSet {
        let radar: Vec<Point3> = points.iter().map(|p| t.apply(p)).collect();
        CorrespondenceSet::from_centers(points, &radar).unwrap()
    }

    fn assert_transform_eq(a: &RigidTransform, b: &RigidTransform, tol: f64) {
        assert!((a.rotation() - b.rotation()).amax() < tol, "{a:?} vs {b:?}");
        assert!((a.translation() - b.translation()).amax() < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn identity_pairs() {
        let pts = [
            Point3::new(0.0, 0.0, 0.3),
            Point3::new(0.06, 0.0, 0.3),
            Point3::new(0.0, 0.06, 0.31),
            Point3::new(0.06, 0.06, 0.3),
        ];
        let calib = kabsch_register(&mapped(&pts, &RigidTransform::identity()), 1.0).unwrap();
        assert_transform_eq(calib.transform(), &RigidTransform::identity(), 1e-12);
        assert!(calib.residual_rmse() < 1e-12);
    }

    #[test]
    fn recovers_random_transforms_from_general_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let truth = random_transform(&mut rng);
            let pts: Vec<Point3> = (0..4)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(0.1..0.8),
                    )
                })
                .collect();
            let calib = kabsch_register(&mapped(&pts, &truth), 1.0).unwrap();
            assert_transform_eq(calib.transform(), &truth, 1e-9);
            assert!((calib.transform().rotation().determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_transform_from_coplanar_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let square = [
            Point3::new(-0.03, -0.03, 0.35),
            Point3::new(0.03, -0.03, 0.35),
            Point3::new(-0.03, 0.03, 0.35),
            Point3::new(0.03, 0.03, 0.35),
        ];
        for _ in 0..20 {
            let truth = random_transform(&mut rng);
            let calib = kabsch_register(&mapped(&square, &truth), 1.0).unwrap();
            assert_transform_eq(calib.transform(), &truth, 1e-9);
        }
    }

    #[test]
    fn honours_a_priori_scale() {
        let truth = RigidTransform::from_euler(0.1, -0.2, 0.3, Vector3::new(0.01, 0.02, -0.03))
            .with_scale(0.001)
            .unwrap();
        let pts_mm = [
            Point3::new(0.0, 0.0, 300.0),
            Point3::new(60.0, 0.0, 300.0),
            Point3::new(0.0, 60.0, 300.0),
            Point3::new(60.0, 60.0, 325.0),
        ];
        let calib = kabsch_register(&mapped(&pts_mm, &truth), 0.001).unwrap();
        assert_transform_eq(calib.transform(), &truth, 1e-9);
        assert_eq!(calib.transform().scale(), 0.001);
    }

    #[test]
    fn mirrored_input_still_yields_a_rotation() {
        let pts = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let mirrored: Vec<Point3> = pts.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let set = CorrespondenceSet::from_centers(&pts, &mirrored).unwrap();
        let (calib, diag) = kabsch_register_detailed(&set, 1.0).unwrap();
        assert!((calib.transform().rotation().determinant() - 1.0).abs() < 1e-12);
        assert!(calib.residual_rmse() > 0.1);
        // A mirror has the same singular values, so the spread check cannot flag it.
        assert!(!diag.warning);
    }

    #[test]
    fn collinear_pairs_are_degenerate() {
        let pts = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        assert!(matches!(
            kabsch_register(&mapped(&pts, &RigidTransform::identity()), 1.0),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            kabsch_register(&mapped(&pts[..2], &RigidTransform::identity()), 1.0),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn residual_is_invariant_under_joint_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let optical: Vec<Point3> = (0..6)
            .map(|_| {
                Point3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(0.2..0.5),
                )
            })
            .collect();
        let radar: Vec<Point3> = optical
            .iter()
            .map(|p| p + Vector3::new(rng.random_range(-0.002..0.002), 0.01, rng.random_range(-0.002..0.002)))
            .collect();
        let base = kabsch_register(&CorrespondenceSet::from_centers(&optical, &radar).unwrap(), 1.0).unwrap();
        let a = random_transform(&mut rng);
        let b = random_transform(&mut rng);
        let moved_o: Vec<Point3> = optical.iter().map(|p| a.apply(p)).collect();
        let moved_r: Vec<Point3> = radar.iter().map(|p| b.apply(p)).collect();
        let moved = kabsch_register(&CorrespondenceSet::from_centers(&moved_o, &moved_r).unwrap(), 1.0).unwrap();
        assert!((base.residual_rmse() - moved.residual_rmse()).abs() < 1e-9);
    }

    #[test]
    fn noiseless_diagnostics_match_spread() {
        let pts = [
            Point3::new(0.0, 0.0, 0.3),
            Point3::new(0.06, 0.0, 0.3),
            Point3::new(0.0, 0.06, 0.3),
            Point3::new(0.06, 0.06, 0.33),
        ];
        let truth = RigidTransform::from_euler(0.3, 0.1, -0.4, Vector3::new(0.1, 0.0, 0.02));
        let (_, diag) = kabsch_register_detailed(&mapped(&pts, &truth), 1.0).unwrap();
        assert!(diag.relative_deviation < 1e-9);
        assert!(!diag.warning);
    }

    #[test]
    fn calibration_rmse_must_match_residuals() {
        let t = RigidTransform::identity();
        assert!(RigidCalibration::from_parts(t, 0.5, vec![0.5, 0.5]).is_ok());
        assert!(RigidCalibration::from_parts(t, 0.4, vec![0.5, 0.5]).is_err());
        let c = RigidCalibration::new(t, vec![0.003, 0.004, 0.0, 0.0]).unwrap();
        assert!((c.residual_rmse() - 0.0025).abs() < 1e-15);
    }
}
