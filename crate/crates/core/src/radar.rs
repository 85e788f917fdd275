//! Radar side: confidence-ordered cluster detection and the constrained
//! energy search that picks the four corner balls and the anchor ball.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{centroid, fit_plane_tls, Plane, Point3};
use crate::ordering::{order_indices, Orientation};
use crate::ransac::{AcceptanceRule, Score};
use crate::sensor::RadarCloud;
use crate::target::TargetGeometry;

/// Clusters needed to form one target hypothesis.
pub const MIN_CLUSTERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Points more than this many dB below the peak are dropped.
    pub t_db: f64,
    /// Suppression radius around a seed, also the assignment gate (m).
    pub t_min: f64,
    /// Seeds farther than this from every earlier seed are rejected (m).
    pub t_max: f64,
    pub n_clusters: usize,
    pub m_samples: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            t_db: 15.0,
            t_min: 0.02,
            t_max: 0.30,
            n_clusters: 20,
            m_samples: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub centers: Vec<Point3>,
    pub mean_confidence: Vec<f64>,
    pub member_counts: Vec<usize>,
    /// Cloud index of each cluster's seed point.
    pub seeds: Vec<usize>,
    /// Cloud indices of each cluster's members, seed first.
    pub members: Vec<Vec<usize>>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Clusters given directly by their centers, one member each.
    pub fn from_centers(centers: Vec<Point3>) -> Self {
        let n = centers.len();
        Self {
            centers,
            mean_confidence: vec![1.0; n],
            member_counts: vec![1; n],
            seeds: (0..n).collect(),
            members: (0..n).map(|i| vec![i]).collect(),
        }
    }
}

/// Greedy non-maximum suppression on confidence, then fills each cluster
/// with its nearest unassigned points until it holds `m_samples` members.
pub fn detect_clusters(cloud: &RadarCloud, params: &ClusterParams) -> Result<ClusterSet> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("radar cloud has no points"));
    }
    if !(params.t_min >= 0.0 && params.t_max > 0.0 && params.t_db >= 0.0) {
        return Err(Error::validation("cluster parameters", format!("{params:?}")));
    }
    let points = cloud.points();
    let confidence = cloud.confidence();
    let mut candidates: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.amplitude_db()[i] >= -params.t_db)
        .collect();
    candidates.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]).then(a.cmp(&b)));

    let t_min2 = params.t_min * params.t_min;
    let t_max2 = params.t_max * params.t_max;
    let mut suppressed = vec![false; cloud.len()];
    let mut seeds: Vec<usize> = Vec::new();
    for &i in &candidates {
        if seeds.len() >= params.n_clusters {
            break;
        }
        if suppressed[i] {
            continue;
        }
        let p = points[i];
        if !seeds.is_empty() && seeds.iter().all(|&s| (points[s] - p).norm_squared() > t_max2) {
            continue;
        }
        seeds.push(i);
        for &j in &candidates {
            if (points[j] - p).norm_squared() <= t_min2 {
                suppressed[j] = true;
            }
        }
    }
    if seeds.len() < MIN_CLUSTERS {
        return Err(Error::InsufficientClusters {
            found: seeds.len(),
            required: MIN_CLUSTERS,
        });
    }

    let mut members: Vec<Vec<usize>> = seeds.iter().map(|&s| vec![s]).collect();
    let mut is_seed = vec![false; cloud.len()];
    for &s in &seeds {
        is_seed[s] = true;
    }
    for &i in &candidates {
        if is_seed[i] {
            continue;
        }
        let p = points[i];
        let (nearest, d2) = seeds
            .iter()
            .enumerate()
            .map(|(k, &s)| (k, (points[s] - p).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("at least five seeds");
        if d2 <= t_min2 && members[nearest].len() < params.m_samples.max(1) {
            members[nearest].push(i);
        }
    }

    let mut set = ClusterSet {
        centers: Vec::with_capacity(seeds.len()),
        mean_confidence: Vec::with_capacity(seeds.len()),
        member_counts: Vec::with_capacity(seeds.len()),
        seeds,
        members: Vec::new(),
    };
    for m in &members {
        let pts: Vec<Point3> = m.iter().map(|&i| points[i]).collect();
        set.centers.push(centroid(&pts).expect("seed is a member"));
        set.mean_confidence
            .push(m.iter().map(|&i| confidence[i]).sum::<f64>() / m.len() as f64);
        set.member_counts.push(m.len());
    }
    set.members = members;
    Ok(set)
}

/// Weights of the sphere, plane and anchor terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 2.0,
            gamma: 4.0,
        }
    }
}

/// Total and per-term energies (unweighted terms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub total: f64,
    pub data: f64,
    pub sphere: f64,
    pub plane: f64,
    pub anchor: f64,
}

fn data_term(corners: &[Point3; 4], plane: &Plane) -> f64 {
    corners.iter().map(|c| plane.signed_distance(c).abs()).sum()
}

/// Printed as `‖v·(1/‖v‖ − d)‖`, which mixes units; read as the distance
/// penalty `|‖v‖ − d|` on the plane-projected corner pairs.
fn sphere_term(corners: &[Point3; 4], plane: &Plane, geometry: &TargetGeometry) -> f64 {
    let projected = corners.map(|c| plane.project(&c));
    let mut sum = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            sum += ((projected[i] - projected[j]).norm() - geometry.distance(i, j)).abs();
        }
    }
    sum
}

/// The normal faces the sensor and the board lies behind the corners, so
/// the anchor offset is measured against the normal.
fn plane_term(corners: &[Point3; 4], anchor: &Point3, plane: &Plane, geometry: &TargetGeometry) -> f64 {
    let n = plane.normal();
    corners
        .iter()
        .map(|c| ((c - anchor).dot(n) - geometry.board_offset()).abs())
        .sum()
}

fn anchor_term(corners: &[Point3; 4], anchor: &Point3, plane: &Plane) -> f64 {
    let mean = corners.iter().fold(Point3::origin().coords, |acc, c| acc + c.coords) / 4.0;
    (plane.project(anchor).coords - mean).norm()
}

/// Energy of ordered `corners` and `anchor` against the board `plane`.
pub fn evaluate_energy(
    corners: &[Point3; 4],
    anchor: &Point3,
    plane: &Plane,
    geometry: &TargetGeometry,
    weights: &EnergyWeights,
) -> Energy {
    let data = data_term(corners, plane);
    let sphere = sphere_term(corners, plane, geometry);
    let plane_energy = plane_term(corners, anchor, plane, geometry);
    let anchor_energy = anchor_term(corners, anchor, plane);
    Energy {
        total: data + weights.alpha * sphere + weights.beta * plane_energy + weights.gamma * anchor_energy,
        data,
        sphere,
        plane: plane_energy,
        anchor: anchor_energy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationParams {
    pub weights: EnergyWeights,
    pub inlier_threshold: f64,
    /// Plane distance (m) within which a center counts as an inlier.
    pub plane_eps: f64,
    pub energy_reject: f64,
    /// Count the anchor (offset-plane test) toward the inlier ratio.
    pub anchor_in_inlier_ratio: bool,
    pub orientation: Orientation,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            weights: EnergyWeights::default(),
            inlier_threshold: 0.05,
            plane_eps: 0.003,
            energy_reject: 0.05,
            anchor_in_inlier_ratio: true,
            orientation: Orientation::camera(),
        }
    }
}

/// Localized radar target in the radar frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarTarget {
    pub corners: [Point3; 4],
    pub anchor: Point3,
    pub board_plane: Plane,
    pub energy: Energy,
    pub inlier_ratio: f64,
    /// Cluster indices of the ordered corners.
    pub corner_clusters: [usize; 4],
    pub anchor_cluster: usize,
}

/// Fraction of the hypothesis' centers that sit on the fitted plane, and
/// optionally the anchor on the offset board plane.
pub fn inlier_ratio(
    corners: &[Point3; 4],
    anchor: &Point3,
    plane: &Plane,
    geometry: &TargetGeometry,
    params: &LocalizationParams,
) -> f64 {
    let mut inliers = corners
        .iter()
        .filter(|c| plane.signed_distance(c).abs() < params.plane_eps)
        .count();
    let mut total = 4;
    if params.anchor_in_inlier_ratio {
        total += 1;
        if (-plane.signed_distance(anchor) - geometry.board_offset()).abs() < params.plane_eps {
            inliers += 1;
        }
    }
    inliers as f64 / total as f64
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exhaustive search over every choice of four corner clusters and one
/// anchor cluster, keeping the best hypothesis under the inlier/energy
/// acceptance rule. Candidates are visited in lexicographic order of the
/// corner indices, then the anchor index, so ties resolve to the smallest.
pub fn localize_radar_target(
    clusters: &ClusterSet,
    geometry: &TargetGeometry,
    params: &LocalizationParams,
) -> Result<RadarTarget> {
    let n = clusters.len();
    if n < MIN_CLUSTERS {
        return Err(Error::InsufficientClusters {
            found: n,
            required: MIN_CLUSTERS,
        });
    }
    let centers = &clusters.centers;
    let rule = AcceptanceRule::new(params.inlier_threshold);
    let up = params.orientation.up;
    let right = params.orientation.right;
    let mut best: Option<(Score, RadarTarget)> = None;
    let mut idx = [0usize, 1, 2, 3];
    'search: loop {
        let raw = idx.map(|i| centers[i]);
        if let Ok(plane) = fit_plane_tls(&raw) {
            if let Ok(order) = order_indices(&raw, &up, &right) {
                let corners = order.map(|k| raw[k]);
                let corner_clusters = order.map(|k| idx[k]);
                for (a, &anchor) in centers.iter().enumerate() {
                    if idx.contains(&a) {
                        continue;
                    }
                    let energy = evaluate_energy(&corners, &anchor, &plane, geometry, &params.weights);
                    let k = inlier_ratio(&corners, &anchor, &plane, geometry, params);
                    let score = Score {
                        inlier_ratio: k,
                        error: energy.total,
                    };
                    if rule.prefers(score, best.as_ref().map(|b| b.0)) {
                        best = Some((
                            score,
                            RadarTarget {
                                corners,
                                anchor,
                                board_plane: plane,
                                energy,
                                inlier_ratio: k,
                                corner_clusters,
                                anchor_cluster: a,
                            },
                        ));
                        if energy.total <= 1e-12 && k == 1.0 {
                            break 'search;
                        }
                    }
                }
            }
        }
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    let Some((_, target)) = best else {
        return Err(Error::LocalizationFailed {
            energy: f64::INFINITY,
            threshold: params.energy_reject,
            detail: format!("no unambiguous non-degenerate hypothesis among {n} clusters"),
        });
    };
    if !(target.energy.total <= params.energy_reject) {
        let e = target.energy;
        return Err(Error::LocalizationFailed {
            energy: e.total,
            threshold: params.energy_reject,
            detail: format!(
                "best clusters {:?} + anchor {}: data {:.5}, sphere {:.5}, plane {:.5}, anchor {:.5}, inlier ratio {:.2}",
                target.corner_clusters, target.anchor_cluster, e.data, e.sphere, e.plane, e.anchor, target.inlier_ratio
            ),
        });
    }
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RigidTransform, Vector3};
    use crate::target::TargetGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn target_centers(pose: &RigidTransform) -> ([Point3; 4], Point3) {
        let g = TargetGeometry::default();
        (
            g.corner_positions().map(|c| pose.apply(&c)),
            pose.apply(&g.anchor_position()),
        )
    }

    fn pose() -> RigidTransform {
        RigidTransform::from_euler(0.05, -0.1, 0.08, Vector3::new(0.01, -0.02, 0.35))
    }

    #[test]
    fn perfect_geometry_has_zero_energy() {
        let (corners, anchor) = target_centers(&pose());
        let plane = fit_plane_tls(&corners).unwrap();
        let e = evaluate_energy(
            &corners,
            &anchor,
            &plane,
            &TargetGeometry::default(),
            &EnergyWeights::default(),
        );
        for v in [e.total, e.data, e.sphere, e.plane, e.anchor] {
            assert!(v.abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn in_plane_anchor_shift_only_changes_anchor_term() {
        let (corners, anchor) = target_centers(&pose());
        let g = TargetGeometry::default();
        let plane = fit_plane_tls(&corners).unwrap();
        let in_plane = (corners[1] - corners[0]).normalize();
        let moved = anchor + in_plane * 0.005;
        let e = evaluate_energy(&corners, &moved, &plane, &g, &EnergyWeights::default());
        assert!((e.anchor - 0.005).abs() < 1e-12);
        assert!(e.data.abs() < 1e-12 && e.sphere.abs() < 1e-12 && e.plane.abs() < 1e-12);
    }

    #[test]
    fn corner_moved_along_normal() {
        let (mut corners, anchor) = target_centers(&pose());
        let g = TargetGeometry::default();
        let plane = fit_plane_tls(&corners).unwrap();
        corners[2] += plane.normal() * 0.003;
        let e = evaluate_energy(&corners, &anchor, &plane, &g, &EnergyWeights::default());
        assert!((e.data - 0.003).abs() < 1e-12);
        assert!(e.sphere.abs() < 1e-12);
        assert!((e.plane - 0.003).abs() < 1e-12);
    }

    #[test]
    fn energy_is_invariant_under_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = TargetGeometry::default();
        let (corners, anchor) = target_centers(&pose());
        let noisy = corners.map(|c| {
            c + Vector3::new(
                rng.random_range(-0.002..0.002),
                rng.random_range(-0.002..0.002),
                rng.random_range(-0.002..0.002),
            )
        });
        let plane = fit_plane_tls(&noisy).unwrap();
        let base = evaluate_energy(&noisy, &anchor, &plane, &g, &EnergyWeights::default());
        let motion = RigidTransform::from_euler(0.3, 0.2, -0.1, Vector3::new(0.05, 0.01, 0.02));
        let moved = noisy.map(|c| motion.apply(&c));
        let moved_plane = fit_plane_tls(&moved).unwrap();
        let e = evaluate_energy(
            &moved,
            &motion.apply(&anchor),
            &moved_plane,
            &g,
            &EnergyWeights::default(),
        );
        assert!((e.total - base.total).abs() < 1e-9);
    }

    #[test]
    fn exact_target_is_found_with_zero_energy() {
        let (corners, anchor) = target_centers(&pose());
        // Shuffled so the search has to do the ordering.
        let clusters = ClusterSet::from_centers(vec![anchor, corners[3], corners[0], corners[2], corners[1]]);
        let t = localize_radar_target(&clusters, &TargetGeometry::default(), &LocalizationParams::default()).unwrap();
        assert!(t.energy.total < 1e-9);
        assert_eq!(t.corner_clusters, [2, 4, 3, 1]);
        assert_eq!(t.anchor_cluster, 0);
        assert_eq!(t.inlier_ratio, 1.0);
    }

    #[test]
    fn clutter_does_not_displace_the_target() {
        let g = TargetGeometry::default();
        let mut hits = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (corners, anchor) = target_centers(&pose());
            let mut centers: Vec<Point3> = Vec::new();
            for _ in 0..15 {
                centers.push(Point3::new(
                    rng.random_range(-0.12..0.12),
                    rng.random_range(-0.12..0.12),
                    rng.random_range(0.25..0.45),
                ));
            }
            let mut all = vec![anchor];
            all.extend(corners);
            let mut jitter = |p: Point3| {
                p + Vector3::new(
                    rng.random_range(-0.001..0.001),
                    rng.random_range(-0.001..0.001),
                    rng.random_range(-0.001..0.001),
                )
            };
            let noisy: Vec<Point3> = all.into_iter().map(&mut jitter).collect();
            centers.extend(noisy.iter().copied());
            let clusters = ClusterSet::from_centers(centers);
            let t = localize_radar_target(&clusters, &g, &LocalizationParams::default()).unwrap();
            let mut picked: Vec<usize> = t.corner_clusters.to_vec();
            picked.push(t.anchor_cluster);
            picked.sort();
            if picked == [15, 16, 17, 18, 19] && t.anchor_cluster == 15 {
                hits += 1;
            }
        }
        assert_eq!(hits, 20);
    }

    fn cloud(points: Vec<Point3>, amps: &[f64]) -> RadarCloud {
        RadarCloud::from_amplitudes(points, amps).unwrap()
    }

    #[test]
    fn close_points_merge_into_one_cluster() {
        let mut pts = vec![Point3::new(0.0, 0.0, 0.3), Point3::new(0.01, 0.0, 0.3)];
        let mut amps = vec![0.9, 1.0];
        for k in 0..4 {
            pts.push(Point3::new(0.05 * (k + 1) as f64, 0.05, 0.3));
            amps.push(0.8);
        }
        let set = detect_clusters(&cloud(pts, &amps), &ClusterParams::default()).unwrap();
        assert_eq!(set.len(), 5);
        assert_eq!(set.seeds[0], 1);
        assert_eq!(set.members[0], vec![1, 0]);
    }

    #[test]
    fn far_scatterer_is_not_a_seed() {
        let mut pts = Vec::new();
        let mut amps = Vec::new();
        for k in 0..5 {
            pts.push(Point3::new(0.04 * k as f64, 0.0, 0.3));
            amps.push(1.0 - 0.01 * k as f64);
        }
        pts.push(Point3::new(0.7, 0.0, 0.3));
        amps.push(0.95);
        let set = detect_clusters(&cloud(pts, &amps), &ClusterParams::default()).unwrap();
        assert_eq!(set.seeds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dim_points_are_dropped_and_too_few_clusters_fail() {
        let pts = (0..6).map(|k| Point3::new(0.05 * k as f64, 0.0, 0.3)).collect();
        let amps = [1.0, 1.0, 1.0, 1.0, 0.1, 0.1];
        assert!(matches!(
            detect_clusters(&cloud(pts, &amps), &ClusterParams::default()),
            Err(Error::InsufficientClusters { found: 4, .. })
        ));
    }

    #[test]
    fn isolated_targets_among_faint_clutter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (corners, anchor) = target_centers(&pose());
        let mut pts: Vec<Point3> = corners.to_vec();
        pts.push(anchor);
        let mut amps = vec![1.0; 5];
        for _ in 0..300 {
            pts.push(Point3::new(
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.15..0.15),
                rng.random_range(0.2..0.5),
            ));
            amps.push(10f64.powf(-30.0 / 20.0));
        }
        let set = detect_clusters(&cloud(pts, &amps), &ClusterParams::default()).unwrap();
        assert_eq!(set.seeds, vec![0, 1, 2, 3, 4]);
        for (c, p) in set.centers.iter().zip(corners.iter().chain([&anchor])) {
            assert_eq!(c, p);
        }
    }
}
