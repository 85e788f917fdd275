//! Optical side: circle Hough detection of the styrofoam spheres on the depth
//! map, color/size filtering, back-projection and weighted RANSAC sphere fits.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Unused whenever std is linked in, which provides the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{Matrix3, Point3, Vector3};
use crate::ordering::{order_indices, Orientation};
use crate::ransac::{AcceptanceRule, Score};
use crate::sensor::DepthCapture;
use crate::target::TargetGeometry;

/// A detected circle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleCandidate {
    pub center: (f64, f64),
    pub radius: f64,
    /// Edge pixels supporting the circle.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughParams {
    pub min_radius: f64,
    pub max_radius: f64,
    /// Edge threshold as a percentile of the Sobel magnitude.
    pub edge_percentile: f64,
    /// Lower bound on the edge threshold (meters per Sobel unit).
    pub min_gradient: f64,
    /// Minimum 3×3-smoothed accumulator value of a center peak.
    pub min_votes: u32,
    pub min_center_distance: f64,
    pub max_candidates: usize,
    /// Required supporting edge pixels as a fraction of the circumference.
    pub min_support: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            min_radius: 10.0,
            max_radius: 100.0,
            edge_percentile: 0.9,
            min_gradient: 0.02,
            min_votes: 60,
            min_center_distance: 10.0,
            max_candidates: 30,
            min_support: 0.35,
        }
    }
}

struct Edge {
    u: f64,
    v: f64,
    /// Unit gradient of the clamped depth.
    gu: f64,
    gv: f64,
}

fn clamped_depth(capture: &DepthCapture, max_range: f64) -> Vec<f64> {
    capture
        .depth()
        .iter()
        .map(|&d| {
            let d = d as f64;
            if d > 0.0 && d < max_range {
                d
            } else {
                max_range
            }
        })
        .collect()
}

fn sobel(depth: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let d = |du: usize, dv: usize| depth[(v + dv - 1) * w + (u + du - 1)];
            gx[v * w + u] = (d(2, 0) + 2.0 * d(2, 1) + d(2, 2)) - (d(0, 0) + 2.0 * d(0, 1) + d(0, 2));
            gy[v * w + u] = (d(0, 2) + 2.0 * d(1, 2) + d(2, 2)) - (d(0, 0) + 2.0 * d(1, 0) + d(2, 0));
        }
    }
    (gx, gy)
}

fn extract_edges(capture: &DepthCapture, max_range: f64, params: &HoughParams) -> Vec<Edge> {
    let (w, h) = (capture.width(), capture.height());
    let depth = clamped_depth(capture, max_range);
    let (gx, gy) = sobel(&depth, w, h);
    let mut mags: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let threshold = {
        let mut sorted = mags.clone();
        let k = ((sorted.len() as f64 - 1.0) * params.edge_percentile.clamp(0.0, 1.0)) as usize;
        let (_, kth, _) = sorted.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
        kth.max(params.min_gradient)
    };
    let mut edges = Vec::new();
    for (i, m) in mags.iter_mut().enumerate() {
        if *m > threshold && *m > 0.0 {
            edges.push(Edge {
                u: (i % w) as f64,
                v: (i / w) as f64,
                gu: gx[i] / *m,
                gv: gy[i] / *m,
            });
        }
    }
    edges
}

/// Kåsa algebraic circle fit.
fn fit_circle(points: &[(f64, f64)]) -> Option<((f64, f64), f64)> {
    if points.len() < 3 {
        return None;
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for &(x, y) in points {
        let row = Vector3::new(x, y, 1.0);
        a += row * row.transpose();
        b -= row * (x * x + y * y);
    }
    let sol = a.lu().solve(&b)?;
    let (cx, cy) = (-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = cx * cx + cy * cy - sol[2];
    (r2 > 0.0 && cx.is_finite() && cy.is_finite()).then(|| ((cx, cy), r2.sqrt()))
}

/// Radius histogram of edges whose gradient points along the radial
/// direction; returns the supporting edge positions of the dominant radius.
fn radial_support(edges: &[Edge], center: (f64, f64), params: &HoughParams) -> Vec<(f64, f64)> {
    let lo = params.min_radius.floor().max(1.0) as usize;
    let hi = params.max_radius.ceil() as usize;
    let mut hist = vec![0u32; hi + 2];
    let mut radial = Vec::new();
    for e in edges {
        let (du, dv) = (e.u - center.0, e.v - center.1);
        let dist = du.hypot(dv);
        if dist < lo as f64 - 0.5 || dist > hi as f64 + 0.5 {
            continue;
        }
        // Gradient points away from the nearer sphere surface.
        if (du * e.gu + dv * e.gv) / dist < 0.9 {
            continue;
        }
        hist[dist.round() as usize] += 1;
        radial.push((e.u, e.v, dist));
    }
    let smoothed = |b: usize| hist[b - 1] + hist[b] + hist[b + 1];
    let Some(best) = (lo.max(1)..=hi).max_by(|&a, &b| smoothed(a).cmp(&smoothed(b)).then(b.cmp(&a))) else {
        return Vec::new();
    };
    radial
        .into_iter()
        .filter(|&(_, _, d)| (d - best as f64).abs() <= 1.5)
        .map(|(u, v, _)| (u, v))
        .collect()
}

/// Circle Hough transform on the depth map clamped to `max_range`
/// (invalid pixels count as `max_range`). Sorted by score, descending.
pub fn detect_circles(capture: &DepthCapture, max_range: f64, params: &HoughParams) -> Result<Vec<CircleCandidate>> {
    if !(max_range.is_finite() && max_range > 0.0) {
        return Err(Error::validation("max_range", format!("{max_range} must be positive")));
    }
    if !(params.min_radius > 0.0 && params.max_radius >= params.min_radius) {
        return Err(Error::validation(
            "hough radii",
            format!("{}..{}", params.min_radius, params.max_radius),
        ));
    }
    let (w, h) = (capture.width(), capture.height());
    let edges = extract_edges(capture, max_range, params);

    // Centers lie toward decreasing depth: the spheres stand out of the board.
    let mut acc = vec![0u32; w * h];
    let r_lo = params.min_radius.round() as i64;
    let r_hi = params.max_radius.round() as i64;
    for e in &edges {
        for r in r_lo..=r_hi {
            let cu = (e.u - r as f64 * e.gu).round();
            let cv = (e.v - r as f64 * e.gv).round();
            if cu < 0.0 || cv < 0.0 || cu >= w as f64 || cv >= h as f64 {
                break;
            }
            acc[cv as usize * w + cu as usize] += 1;
        }
    }

    let mut smooth = vec![0u32; w * h];
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let mut s = 0;
            for dv in 0..3 {
                for du in 0..3 {
                    s += acc[(v + dv - 1) * w + (u + du - 1)];
                }
            }
            smooth[v * w + u] = s;
        }
    }
    let mut peaks = Vec::new();
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let s = smooth[v * w + u];
            if s < params.min_votes.max(1) {
                continue;
            }
            let is_max = (0..3).all(|dv| (0..3).all(|du| smooth[(v + dv - 1) * w + (u + du - 1)] <= s));
            if is_max {
                peaks.push((s, v * w + u));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut centers: Vec<(f64, f64)> = Vec::new();
    let mut candidates = Vec::new();
    for (_, idx) in peaks {
        if candidates.len() >= params.max_candidates {
            break;
        }
        let (u, v) = ((idx % w) as f64, (idx / w) as f64);
        let min_d2 = params.min_center_distance * params.min_center_distance;
        if centers.iter().any(|c| (c.0 - u).powi(2) + (c.1 - v).powi(2) < min_d2) {
            continue;
        }
        centers.push((u, v));

        let mut support = radial_support(&edges, (u, v), params);
        let mut circle = fit_circle(&support);
        if let Some((c, _)) = circle {
            // One re-centering pass on the algebraic fit.
            if (c.0 - u).hypot(c.1 - v) < params.min_center_distance {
                support = radial_support(&edges, c, params);
                circle = fit_circle(&support).or(circle);
            }
        }
        let Some(((cu, cv), radius)) = circle else {
            continue;
        };
        if !(radius >= params.min_radius - 1.0 && radius <= params.max_radius + 1.0) {
            continue;
        }
        if !(cu >= 0.0 && cv >= 0.0 && cu <= (w - 1) as f64 && cv <= (h - 1) as f64) {
            continue;
        }
        if (support.len() as f64) < params.min_support * core::f64::consts::TAU * radius {
            continue;
        }
        candidates.push(CircleCandidate {
            center: (cu, cv),
            radius,
            score: support.len() as f64,
        });
    }
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
    if candidates.is_empty() {
        return Err(Error::NoTargetDetected(format!(
            "no circle candidates ({} edge pixels)",
            edges.len()
        )));
    }
    Ok(candidates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleFilterParams {
    /// Expected sphere colors; an empty palette disables the color test.
    pub palette: Vec<[u8; 3]>,
    /// Max per-channel deviation of the median color from a palette entry.
    pub color_tolerance: f64,
    /// Relative radius tolerance against the accepted circles.
    pub size_tolerance: f64,
}

impl Default for CircleFilterParams {
    fn default() -> Self {
        Self {
            palette: Vec::new(),
            color_tolerance: 40.0,
            size_tolerance: 0.2,
        }
    }
}

fn pixels_in_circle(
    width: usize,
    height: usize,
    c: &CircleCandidate,
    radius: f64,
) -> impl Iterator<Item = (usize, usize)> {
    let (cu, cv) = c.center;
    let u0 = (cu - radius).floor().max(0.0) as usize;
    let v0 = (cv - radius).floor().max(0.0) as usize;
    let u1 = ((cu + radius).ceil().max(0.0) as usize).min(width.saturating_sub(1));
    let v1 = ((cv + radius).ceil().max(0.0) as usize).min(height.saturating_sub(1));
    let r2 = radius * radius;
    (v0..=v1)
        .flat_map(move |v| (u0..=u1).map(move |u| (u, v)))
        .filter(move |&(u, v)| {
            let (du, dv) = (u as f64 - cu, v as f64 - cv);
            du * du + dv * dv <= r2
        })
}

/// Per-channel median color inside the inner 80% of the circle.
pub fn median_color(capture: &DepthCapture, circle: &CircleCandidate) -> Option<[u8; 3]> {
    let mut channels = [Vec::new(), Vec::new(), Vec::new()];
    for (u, v) in pixels_in_circle(capture.width(), capture.height(), circle, 0.8 * circle.radius) {
        let px = capture.rgb_at(u, v);
        for k in 0..3 {
            channels[k].push(px[k]);
        }
    }
    if channels[0].is_empty() {
        return None;
    }
    let mut out = [0u8; 3];
    for k in 0..3 {
        let c = &mut channels[k];
        c.sort_unstable();
        out[k] = c[c.len() / 2];
    }
    Some(out)
}

/// Keeps the four best circles that do not overlap an accepted one, match
/// the accepted size and carry a palette color.
pub fn filter_circles(
    candidates: &[CircleCandidate],
    capture: &DepthCapture,
    params: &CircleFilterParams,
) -> Result<[CircleCandidate; 4]> {
    let mut order: Vec<&CircleCandidate> = candidates.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut accepted: Vec<CircleCandidate> = Vec::new();
    let mut rejected: Vec<String> = Vec::new();
    for c in order {
        if accepted.len() == 4 {
            break;
        }
        let at = format!("({:.1}, {:.1}) r={:.1}", c.center.0, c.center.1, c.radius);
        if let Some(a) = accepted
            .iter()
            .find(|a| (a.center.0 - c.center.0).hypot(a.center.1 - c.center.1) < a.radius + c.radius)
        {
            rejected.push(format!("{at}: overlaps ({:.1}, {:.1})", a.center.0, a.center.1));
            continue;
        }
        if let Some(first) = accepted.first() {
            let mean = accepted.iter().map(|a| a.radius).sum::<f64>() / accepted.len() as f64;
            if (c.radius - mean).abs() > params.size_tolerance * mean {
                rejected.push(format!(
                    "{at}: radius differs from {:.1} (first {:.1})",
                    mean, first.radius
                ));
                continue;
            }
        }
        if !params.palette.is_empty() {
            let Some(color) = median_color(capture, c) else {
                rejected.push(format!("{at}: no pixels"));
                continue;
            };
            let matches = params
                .palette
                .iter()
                .any(|p| (0..3).all(|k| (color[k] as f64 - p[k] as f64).abs() < params.color_tolerance));
            if !matches {
                rejected.push(format!("{at}: median color {color:?} not in palette"));
                continue;
            }
        }
        accepted.push(*c);
    }
    if accepted.len() < 4 {
        let mut msg = format!("{} of 4 circles survived filtering", accepted.len());
        for r in &rejected {
            msg.push_str("; ");
            msg.push_str(r);
        }
        return Err(Error::NoTargetDetected(msg));
    }
    Ok([accepted[0], accepted[1], accepted[2], accepted[3]])
}

/// Back-projected sphere surface samples with normals and range weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceSamples {
    pub points: Vec<Point3>,
    /// Unit normals facing the camera; zero where no estimate was possible.
    pub normals: Vec<Vector3>,
    /// `max(0, ⟨n, −ẑ⟩)`.
    pub weights: Vec<f64>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub const MIN_BACKPROJECTED_POINTS: usize = 30;

/// Lifts every valid pixel inside `circle` and estimates its normal from
/// central differences of the neighboring 3D points.
pub fn backproject_circle(capture: &DepthCapture, circle: &CircleCandidate) -> Result<SurfaceSamples> {
    let mut out = SurfaceSamples::default();
    for (u, v) in pixels_in_circle(capture.width(), capture.height(), circle, circle.radius) {
        let Some(p) = capture.point_at(u, v) else {
            continue;
        };
        let diff = |a: Option<Point3>, b: Option<Point3>| match (a, b) {
            (Some(a), Some(b)) => Some(b - a),
            (None, Some(b)) => Some(b - p),
            (Some(a), None) => Some(p - a),
            (None, None) => None,
        };
        let left = u.checked_sub(1).and_then(|x| capture.point_at(x, v));
        let up = v.checked_sub(1).and_then(|y| capture.point_at(u, y));
        let du = diff(left, capture.point_at(u + 1, v));
        let dv = diff(up, capture.point_at(u, v + 1));
        let normal = match (du, dv) {
            (Some(a), Some(b)) => {
                let n = a.cross(&b);
                let len = n.norm();
                if len > 0.0 && len.is_finite() {
                    let n = n / len;
                    if n.z > 0.0 {
                        -n
                    } else {
                        n
                    }
                } else {
                    Vector3::zeros()
                }
            }
            _ => Vector3::zeros(),
        };
        out.points.push(p);
        out.normals.push(normal);
        out.weights.push((-normal.z).max(0.0));
    }
    if out.len() < MIN_BACKPROJECTED_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} valid depth pixels inside circle at ({:.1}, {:.1}), need {}",
            out.len(),
            circle.center.0,
            circle.center.1,
            MIN_BACKPROJECTED_POINTS
        )));
    }
    Ok(out)
}

/// Weight floor so that grazing samples still constrain the solve.
const MIN_WEIGHT: f64 = 1e-3;
const GAUSS_NEWTON_STEPS: usize = 5;

/// Weighted least-squares sphere center with known radius.
///
/// The algebraic form `2⟨c, s⟩ − k = ‖s‖²` (with `k = ‖c‖² − r²`) gives a
/// linear seed; Gauss–Newton on `‖c − s‖ − r` then enforces the radius.
pub fn fit_sphere_weighted(points: &[Point3], weights: &[f64], radius: f64) -> Option<Point3> {
    fit_sphere_with_steps(points, weights, radius, GAUSS_NEWTON_STEPS)
}

fn fit_sphere_with_steps(points: &[Point3], weights: &[f64], radius: f64, steps: usize) -> Option<Point3> {
    if points.len() < 3 || weights.len() != points.len() {
        return None;
    }
    let weight = |i: usize| weights[i].max(MIN_WEIGHT);
    let mut seed = None;
    if points.len() >= 4 {
        let mut a = Matrix4::zeros();
        let mut b = Vector4::zeros();
        for (i, s) in points.iter().enumerate() {
            let row = Vector4::new(2.0 * s.x, 2.0 * s.y, 2.0 * s.z, -1.0);
            let w = weight(i);
            a += row * row.transpose() * w;
            b += row * (s.coords.norm_squared() * w);
        }
        if let Some(x) = a.lu().solve(&b) {
            let c = Point3::new(x[0], x[1], x[2]);
            let r2 = c.coords.norm_squared() - x[3];
            if c.coords.iter().all(|v| v.is_finite()) && r2 > 0.0 && (r2.sqrt() - radius).abs() < 0.5 * radius {
                seed = Some(c);
            }
        }
    }
    // Samples of a visible cap: the center lies one radius behind them.
    let mut center = seed.unwrap_or_else(|| {
        let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / points.len() as f64;
        let dir = if mean.norm() > 0.0 {
            mean.normalize()
        } else {
            Vector3::z()
        };
        Point3::from(mean + dir * radius)
    });

    for _ in 0..steps {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (i, s) in points.iter().enumerate() {
            let d = center - s;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let j = d / len;
            let w = weight(i);
            jtj += j * j.transpose() * w;
            jtr += j * ((len - radius) * w);
        }
        let Some(step) = jtj.lu().solve(&jtr) else {
            break;
        };
        center -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    center.coords.iter().all(|v| v.is_finite()).then_some(center)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereFitParams {
    pub iterations: usize,
    pub sample_size: usize,
    /// Surface distance (m) below which a sample is an inlier.
    pub inlier_eps: f64,
    pub inlier_threshold: f64,
    /// Minimum inlier ratio of the best hypothesis.
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for SphereFitParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            sample_size: 4,
            inlier_eps: 0.003,
            inlier_threshold: 0.05,
            min_inlier_ratio: 0.3,
            seed: 0,
        }
    }
}

/// Fit of one sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereFit {
    pub center: Point3,
    pub inlier_ratio: f64,
    /// Weighted mean surface distance of the inliers (m).
    pub error: f64,
}

fn score_sphere(center: &Point3, samples: &SurfaceSamples, radius: f64, eps: f64) -> (Score, Vec<usize>) {
    let mut inliers = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, s) in samples.points.iter().enumerate() {
        let d = ((s - center).norm() - radius).abs();
        if d < eps {
            inliers.push(i);
            let w = samples.weights[i].max(MIN_WEIGHT);
            num += w * d;
            den += w;
        }
    }
    let error = if den > 0.0 { num / den } else { f64::INFINITY };
    let score = Score {
        inlier_ratio: inliers.len() as f64 / samples.len() as f64,
        error,
    };
    (score, inliers)
}

/// RANSAC over minimal samples with the inlier/error acceptance rule,
/// followed by a refit on the best hypothesis' inliers.
pub fn fit_sphere_ransac(
    samples: &SurfaceSamples,
    radius: f64,
    params: &SphereFitParams,
    rng: &mut ChaCha8Rng,
) -> Result<SphereFit> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::validation("sphere radius", format!("{radius} must be positive")));
    }
    if samples.len() < 10 || samples.weights.len() != samples.len() {
        return Err(Error::InsufficientData(format!(
            "{} sphere samples, need 10",
            samples.len()
        )));
    }
    let rule = AcceptanceRule::new(params.inlier_threshold);
    let k = params.sample_size.clamp(3, samples.len());
    let mut best: Option<(Score, Point3, Vec<usize>)> = None;
    let mut pts = Vec::with_capacity(k);
    let mut ws = Vec::with_capacity(k);
    for _ in 0..params.iterations {
        let idx = rand::seq::index::sample(rng, samples.len(), k);
        pts.clear();
        ws.clear();
        for i in idx.iter() {
            pts.push(samples.points[i]);
            ws.push(samples.weights[i]);
        }
        let Some(center) = fit_sphere_weighted(&pts, &ws, radius) else {
            continue;
        };
        let (score, inliers) = score_sphere(&center, samples, radius, params.inlier_eps);
        if rule.prefers(score, best.as_ref().map(|b| b.0)) {
            best = Some((score, center, inliers));
        }
    }
    let best_ratio = best.as_ref().map_or(0.0, |b| b.0.inlier_ratio);
    let Some((_, center, inliers)) = best.filter(|b| b.0.inlier_ratio >= params.min_inlier_ratio) else {
        return Err(Error::FitFailed {
            best_inlier_ratio: best_ratio,
            required: params.min_inlier_ratio,
        });
    };

    // Refit until the consensus set is stable, so the result does not
    // depend on which minimal sample won.
    let (mut center, mut inliers) = (center, inliers);
    let mut score = None;
    for _ in 0..CONSENSUS_ROUNDS {
        let in_pts: Vec<Point3> = inliers.iter().map(|&i| samples.points[i]).collect();
        let in_ws: Vec<f64> = inliers.iter().map(|&i| samples.weights[i]).collect();
        let Some(refit) = fit_sphere_refine(&in_pts, &in_ws, radius, center) else {
            break;
        };
        let (s, next) = score_sphere(&refit, samples, radius, params.inlier_eps);
        if next.len() < k {
            break;
        }
        center = refit;
        score = Some(s);
        if next == inliers {
            break;
        }
        inliers = next;
    }
    let score = score.unwrap_or_else(|| score_sphere(&center, samples, radius, params.inlier_eps).0);
    Ok(SphereFit {
        center,
        inlier_ratio: score.inlier_ratio,
        error: score.error,
    })
}

/// Upper bound on refit / re-score passes after RANSAC.
const CONSENSUS_ROUNDS: usize = 20;

/// Gauss–Newton polish from a known-good center.
fn fit_sphere_refine(points: &[Point3], weights: &[f64], radius: f64, start: Point3) -> Option<Point3> {
    let mut center = start;
    for _ in 0..20 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (s, w) in points.iter().zip(weights) {
            let d = center - s;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let j = d / len;
            let w = w.max(MIN_WEIGHT);
            jtj += j * j.transpose() * w;
            jtr += j * ((len - radius) * w);
        }
        let step = jtj.lu().solve(&jtr)?;
        center -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    center.coords.iter().all(|v| v.is_finite()).then_some(center)
}

/// Four ordered sphere centers in the optical frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalTarget {
    pub centers: [Point3; 4],
    pub inlier_ratios: [f64; 4],
    pub fit_errors: [f64; 4],
    /// Circles in the same order as `centers`.
    pub circles: [CircleCandidate; 4],
}

/// Relative tolerance on the pairwise center distances.
pub const PAIRWISE_TOLERANCE: f64 = 0.2;

/// Fits the four spheres (one RNG stream per sphere), orders them with the
/// camera up/right axes and checks the square layout.
pub fn fit_spheres_ransac(
    clouds: &[SurfaceSamples; 4],
    circles: &[CircleCandidate; 4],
    geometry: &TargetGeometry,
    params: &SphereFitParams,
) -> Result<OpticalTarget> {
    let radius = geometry.styrofoam_radius();
    let mut fits = [SphereFit {
        center: Point3::origin(),
        inlier_ratio: 0.0,
        error: 0.0,
    }; 4];
    for (j, cloud) in clouds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(j as u64);
        fits[j] = fit_sphere_ransac(cloud, radius, params, &mut rng)?;
    }
    let centers = fits.map(|f| f.center);
    let orientation = Orientation::camera();
    let order = order_indices(&centers, &orientation.up, &orientation.right)?;
    let target = OpticalTarget {
        centers: order.map(|i| centers[i]),
        inlier_ratios: order.map(|i| fits[i].inlier_ratio),
        fit_errors: order.map(|i| fits[i].error),
        circles: order.map(|i| circles[i]),
    };
    for i in 0..4 {
        for j in i + 1..4 {
            let d = (target.centers[i] - target.centers[j]).norm();
            let expected = geometry.distance(i, j);
            if (d - expected).abs() > PAIRWISE_TOLERANCE * expected {
                return Err(Error::NoTargetDetected(format!(
                    "sphere centers {i} and {j} are {d:.4} m apart, expected {expected:.4} m"
                )));
            }
        }
    }
    Ok(target)
}
