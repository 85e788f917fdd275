//! Ground-truthed synthetic captures: the sphere target, the refinement
//! plate and evaluation objects, rendered for both sensors.
//!
//! The radar frame doubles as the world frame. Both sensors look along +z
//! with x right and y down. Every generator is a pure function of its
//! inputs; the random streams derive from `SceneSpec::seed`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// Unused whenever std is linked in, which provides the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, Vector3};
use crate::sensor::{CameraIntrinsics, DepthCapture, RadarCloud};
use crate::target::TargetGeometry;

/// Sphere colors of the synthetic target.
pub const DEFAULT_PALETTE: [[u8; 3]; 4] = [[220, 40, 40], [40, 200, 60], [40, 80, 220], [230, 210, 40]];
const BOARD_COLOR: [u8; 3] = [235, 235, 230];
const OBJECT_COLOR: [u8; 3] = [170, 170, 175];
const BACKGROUND_COLOR: [u8; 3] = [25, 25, 30];

/// Radar reconstruction range (m).
pub const RADAR_RANGE: (f64, f64) = (0.20, 0.65);

/// Depth at which `SceneSpec::optical_noise` applies.
pub const NOISE_REFERENCE_DEPTH: f64 = 0.3;

/// Side length of the square board behind the spheres (m).
pub const BOARD_SIZE: f64 = 0.16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics {
                fx: 525.0,
                fy: 525.0,
                cx: 319.5,
                cy: 239.5,
            },
            width: 640,
            height: 480,
        }
    }
}

/// Axis-aligned box in the radar frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterVolume {
    pub min: Point3,
    pub max: Point3,
}

impl ClutterVolume {
    fn is_valid(&self) -> bool {
        (0..3).all(|k| self.min[k].is_finite() && self.max[k].is_finite() && self.max[k] > self.min[k])
    }
}

/// Amplitude bands (dB relative to a unit reference) and sample counts of
/// the radar scatterer model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarProfile {
    pub ball_points: usize,
    pub ball_peak_db: (f64, f64),
    /// Extra attenuation of the non-peak ball points.
    pub ball_tail_db: (f64, f64),
    pub glint_points: usize,
    pub glint_db: (f64, f64),
    /// Diffuse points on the sensor-facing cap of each styrofoam sphere.
    pub cap_points: usize,
    pub cap_db: (f64, f64),
    pub clutter_db: (f64, f64),
    /// Share of clutter scatterers (at least one if any) in the bright band.
    pub bright_fraction: f64,
    pub bright_clutter_db: (f64, f64),
    /// Points per clutter scatterer, inclusive range.
    pub clutter_points: (usize, usize),
    /// Position jitter of clutter points (m).
    pub clutter_jitter: f64,
}

impl Default for RadarProfile {
    fn default() -> Self {
        Self {
            ball_points: 12,
            ball_peak_db: (-3.0, 0.0),
            ball_tail_db: (0.0, 6.0),
            glint_points: 8,
            glint_db: (-12.0, -5.0),
            cap_points: 20,
            cap_db: (-18.0, -12.0),
            clutter_db: (-20.0, -8.0),
            bright_fraction: 0.2,
            bright_clutter_db: (-4.0, -1.0),
            clutter_points: (1, 3),
            clutter_jitter: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    /// Target (or plate / evaluation object) frame to radar frame.
    pub target_pose: RigidTransform,
    /// Optical frame to radar frame.
    pub ground_truth_extrinsic: RigidTransform,
    /// Depth noise σ at [`NOISE_REFERENCE_DEPTH`] facing the camera (m).
    pub optical_noise: f64,
    /// Per-point position jitter of radar returns (m).
    pub radar_jitter: f64,
    pub clutter_count: usize,
    pub clutter_volume: ClutterVolume,
    pub radar_profile: RadarProfile,
    pub seed: u64,
}

impl SceneSpec {
    /// Clean scene: target straight ahead, sensors coincident, no noise.
    pub fn clean(distance: f64) -> Self {
        Self {
            target_pose: RigidTransform::from_axis_angle(Vector3::zeros(), 0.0, Vector3::new(0.0, 0.0, distance)),
            ground_truth_extrinsic: RigidTransform::identity(),
            optical_noise: 0.0,
            radar_jitter: 0.0,
            clutter_count: 0,
            clutter_volume: ClutterVolume {
                min: Point3::new(-0.12, -0.12, distance - 0.08),
                max: Point3::new(0.12, 0.12, distance + 0.08),
            },
            radar_profile: RadarProfile::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.optical_noise.is_finite() && self.optical_noise >= 0.0) {
            return Err(Error::Scene(format!(
                "optical noise {} must be non-negative",
                self.optical_noise
            )));
        }
        if !(self.radar_jitter.is_finite() && self.radar_jitter >= 0.0) {
            return Err(Error::Scene(format!(
                "radar jitter {} must be non-negative",
                self.radar_jitter
            )));
        }
        if !self.clutter_volume.is_valid() {
            return Err(Error::Scene("clutter volume is degenerate".into()));
        }
        Ok(())
    }

    /// Optical pose of the target: target frame to optical frame.
    pub fn optical_target_pose(&self) -> RigidTransform {
        self.ground_truth_extrinsic.inverse().compose(&self.target_pose)
    }

    pub fn ground_truth(&self, geometry: &TargetGeometry) -> GroundTruth {
        GroundTruth {
            extrinsic: self.ground_truth_extrinsic,
            corners: geometry.corner_positions().map(|c| self.target_pose.apply(&c)),
            anchor: self.target_pose.apply(&geometry.anchor_position()),
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Ball centers in the radar frame, canonical corner order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub extrinsic: RigidTransform,
    pub corners: [Point3; 4],
    pub anchor: Point3,
}

/// Draws random but plausible scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSampler {
    /// Target distance from the radar (m).
    pub distance: (f64, f64),
    /// Max target tilt about x and y (radians).
    pub max_tilt: f64,
    /// Max target roll about the viewing axis (radians).
    pub max_roll: f64,
    /// Max lateral offset of the target center (m).
    pub max_offset: f64,
    /// Max extrinsic rotation per axis (radians).
    pub extrinsic_rotation: f64,
    /// Max extrinsic translation per axis (m).
    pub extrinsic_translation: Vector3,
    pub optical_noise: f64,
    pub radar_jitter: f64,
    pub clutter_count: usize,
    /// Clutter box half extents around the target center (m).
    pub clutter_half_extent: Vector3,
    pub radar_profile: RadarProfile,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            distance: (0.30, 0.40),
            max_tilt: 12f64.to_radians(),
            max_roll: 15f64.to_radians(),
            max_offset: 0.02,
            extrinsic_rotation: 5f64.to_radians(),
            extrinsic_translation: Vector3::new(0.05, 0.05, 0.03),
            optical_noise: 0.0015,
            radar_jitter: 0.0005,
            clutter_count: 15,
            clutter_half_extent: Vector3::new(0.12, 0.12, 0.08),
            radar_profile: RadarProfile::default(),
        }
    }
}

impl SceneSampler {
    pub fn sample(&self, seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let mut sym = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        let (lo, hi) = self.distance;
        let z = 0.5 * (lo + hi) + sym(0.5 * (hi - lo).max(0.0));
        let center = Vector3::new(sym(self.max_offset), sym(self.max_offset), z);
        let target_pose =
            RigidTransform::from_euler(sym(self.max_tilt), sym(self.max_tilt), sym(self.max_roll), center);
        let t = &self.extrinsic_translation;
        let ground_truth_extrinsic = RigidTransform::from_euler(
            sym(self.extrinsic_rotation),
            sym(self.extrinsic_rotation),
            sym(self.extrinsic_rotation),
            Vector3::new(sym(t.x), sym(t.y), sym(t.z)),
        );
        let h = self.clutter_half_extent;
        SceneSpec {
            target_pose,
            ground_truth_extrinsic,
            optical_noise: self.optical_noise,
            radar_jitter: self.radar_jitter,
            clutter_count: self.clutter_count,
            clutter_volume: ClutterVolume {
                min: Point3::from(center - h),
                max: Point3::from(center + h),
            },
            radar_profile: self.radar_profile,
            seed,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Darkens roughly a third of the pixels of a surface.
fn speckle(color: [u8; 3], u: usize, v: usize, surface: u64) -> [u8; 3] {
    let h = splitmix((u as u64) << 32 ^ (v as u64) ^ surface.wrapping_mul(0x1000_0000_01B3));
    if h.is_multiple_of(3) {
        color.map(|c| (c as f64 * 0.7) as u8)
    } else {
        color
    }
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    Sphere {
        center: Point3,
        radius: f64,
    },
    /// Flat region through `origin` spanned by `ex`, `ey`, in-plane shape in
    /// local coordinates.
    Flat {
        origin: Point3,
        ex: Vector3,
        ey: Vector3,
        normal: Vector3,
        shape: Shape,
    },
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Square {
        half: f64,
    },
    Disk {
        radius: f64,
    },
    /// Plus sign: two bars of half length `half` and half width `arm`.
    Cross {
        half: f64,
        arm: f64,
    },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Square { half } => x.abs() <= half && y.abs() <= half,
            Shape::Disk { radius } => x * x + y * y <= radius * radius,
            Shape::Cross { half, arm } => (x.abs() <= half && y.abs() <= arm) || (x.abs() <= arm && y.abs() <= half),
        }
    }
}

impl Surface {
    fn flat(pose: &RigidTransform, z: f64, shape: Shape) -> Surface {
        Surface::Flat {
            origin: pose.apply(&Point3::new(0.0, 0.0, z)),
            ex: pose.apply_vector(&Vector3::x()),
            ey: pose.apply_vector(&Vector3::y()),
            normal: pose.apply_vector(&Vector3::z()),
            shape,
        }
    }

    /// Nearest positive ray parameter along `origin + t·dir` and the normal.
    fn intersect(&self, origin: &Point3, dir: &Vector3) -> Option<(f64, Vector3)> {
        match *self {
            Surface::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.norm_squared();
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = if (-b - sq) / a > 1e-12 {
                    (-b - sq) / a
                } else {
                    (-b + sq) / a
                };
                if t <= 1e-12 {
                    return None;
                }
                let p = origin + dir * t;
                Some((t, (p - center) / radius))
            }
            Surface::Flat {
                origin: o,
                ex,
                ey,
                normal,
                shape,
            } => {
                let denom = dir.dot(&normal);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (o - origin).dot(&normal) / denom;
                if t <= 1e-12 {
                    return None;
                }
                let p = origin + dir * t;
                let local = p - o;
                shape.contains(local.dot(&ex), local.dot(&ey)).then_some((t, normal))
            }
        }
    }
}

struct Hit {
    depth: f64,
    cos: f64,
    surface: usize,
}

fn cast(surfaces: &[Surface], dir: &Vector3) -> Option<Hit> {
    let origin = Point3::origin();
    let mut best: Option<Hit> = None;
    for (i, s) in surfaces.iter().enumerate() {
        if let Some((t, n)) = s.intersect(&origin, dir) {
            if best.as_ref().is_none_or(|b| t < b.depth) {
                let cos = (n.dot(dir) / dir.norm()).abs();
                best = Some(Hit {
                    depth: t,
                    cos,
                    surface: i,
                });
            }
        }
    }
    best
}

/// Ray-casts `surfaces` (optical frame) with per-pixel depth noise.
fn render(
    surfaces: &[Surface],
    colors: &[[u8; 3]],
    camera: &CameraModel,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DepthCapture> {
    let (w, h) = (camera.width, camera.height);
    let k = camera.intrinsics;
    let mut depth = vec![0.0f32; w * h];
    let mut rgb = vec![BACKGROUND_COLOR; w * h];
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for v in 0..h {
        for u in 0..w {
            let dir = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let Some(hit) = cast(surfaces, &dir) else {
                continue;
            };
            // Ray parameter with unit z is the z-depth.
            let sigma = noise * (hit.depth / NOISE_REFERENCE_DEPTH) / hit.cos.max(0.2);
            let z = hit.depth + sigma * unit.sample(rng);
            if z > 0.0 {
                depth[v * w + u] = z as f32;
                rgb[v * w + u] = speckle(colors[hit.surface], u, v, hit.surface as u64);
            }
        }
    }
    DepthCapture::new(w, h, depth, rgb, k)
}

fn check_in_frustum(camera: &CameraModel, center: &Point3, radius: f64, what: &str) -> Result<()> {
    let k = &camera.intrinsics;
    let Some((u, v)) = k.project(center) else {
        return Err(Error::Scene(format!("{what} is behind the camera")));
    };
    let margin = k.fx.max(k.fy) * radius / center.z.max(1e-9);
    if u - margin < 0.0
        || v - margin < 0.0
        || u + margin > camera.width as f64 - 1.0
        || v + margin > camera.height as f64 - 1.0
    {
        return Err(Error::Scene(format!(
            "{what} at pixel ({u:.1}, {v:.1}) leaves the image"
        )));
    }
    Ok(())
}

/// Depth map and color image of the sphere target seen by the optical sensor.
pub fn render_depth_capture(spec: &SceneSpec, geometry: &TargetGeometry, camera: &CameraModel) -> Result<DepthCapture> {
    spec.validate()?;
    let pose = spec.optical_target_pose();
    let r = geometry.styrofoam_radius();
    let mut surfaces = Vec::new();
    let mut colors = Vec::new();
    for (i, c) in geometry.corner_positions().iter().enumerate() {
        let center = pose.apply(c);
        check_in_frustum(camera, &center, r, "sphere")?;
        surfaces.push(Surface::Sphere { center, radius: r });
        colors.push(DEFAULT_PALETTE[i]);
    }
    surfaces.push(Surface::flat(
        &pose,
        geometry.board_offset(),
        Shape::Square { half: 0.5 * BOARD_SIZE },
    ));
    colors.push(BOARD_COLOR);
    render(&surfaces, &colors, camera, spec.optical_noise, &mut spec.rng(0))
}

fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn uniform(rng: &mut ChaCha8Rng, band: (f64, f64)) -> f64 {
    if band.1 > band.0 {
        rng.random_range(band.0..band.1)
    } else {
        band.0
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3 {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)) * sigma
}

fn check_radar_range(p: &Point3, what: &str) -> Result<()> {
    let range = p.coords.norm();
    if !(range >= RADAR_RANGE.0 && range <= RADAR_RANGE.1) {
        return Err(Error::Scene(format!(
            "{what} at range {range:.3} m is outside the radar range {:.2}..{:.2} m",
            RADAR_RANGE.0, RADAR_RANGE.1
        )));
    }
    Ok(())
}

/// Radar cloud with the point indices that belong to each metal ball.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarScene {
    pub cloud: RadarCloud,
    /// Corner balls in canonical order, then the anchor.
    pub ball_points: [Vec<usize>; 5],
    pub clutter_points: Vec<usize>,
}

fn push_clutter(spec: &SceneSpec, rng: &mut ChaCha8Rng, points: &mut Vec<Point3>, amps: &mut Vec<f64>) -> Vec<usize> {
    let p = &spec.radar_profile;
    let mut indices = Vec::new();
    let bright = if spec.clutter_count == 0 {
        0
    } else {
        ((spec.clutter_count as f64 * p.bright_fraction).round() as usize).clamp(1, spec.clutter_count)
    };
    let vol = &spec.clutter_volume;
    for k in 0..spec.clutter_count {
        let center = Point3::new(
            rng.random_range(vol.min.x..vol.max.x),
            rng.random_range(vol.min.y..vol.max.y),
            rng.random_range(vol.min.z..vol.max.z),
        );
        let band = if k < bright { p.bright_clutter_db } else { p.clutter_db };
        let peak = uniform(rng, band);
        let (lo, hi) = p.clutter_points;
        let count = if hi > lo { rng.random_range(lo..=hi) } else { lo.max(1) };
        for j in 0..count {
            indices.push(points.len());
            points.push(center + gaussian(rng, p.clutter_jitter));
            amps.push(db_to_amplitude(if j == 0 {
                peak
            } else {
                peak - uniform(rng, (0.0, 4.0))
            }));
        }
    }
    indices
}

/// Metal balls, styrofoam glints and clutter as seen by the radar.
pub fn render_radar_scene(spec: &SceneSpec, geometry: &TargetGeometry) -> Result<RadarScene> {
    spec.validate()?;
    let truth = spec.ground_truth(geometry);
    for c in truth.corners.iter().chain([&truth.anchor]) {
        check_radar_range(c, "target ball")?;
    }
    let p = &spec.radar_profile;
    let mut rng = spec.rng(1);
    let mut points = Vec::new();
    let mut amps = Vec::new();
    let mut ball_points: [Vec<usize>; 5] = Default::default();
    for (b, center) in truth.corners.iter().chain([&truth.anchor]).enumerate() {
        let peak = uniform(&mut rng, p.ball_peak_db);
        for j in 0..p.ball_points.max(1) {
            let db = if j == 0 {
                peak
            } else {
                peak - uniform(&mut rng, p.ball_tail_db)
            };
            ball_points[b].push(points.len());
            points.push(center + gaussian(&mut rng, spec.radar_jitter));
            amps.push(db_to_amplitude(db));
        }
    }
    let r = geometry.styrofoam_radius();
    // The aperture is wider than the target, so each sphere's strongest
    // front-surface return sits where it is closest to the array plane.
    let toward = -Vector3::z();
    for center in &truth.corners {
        let glint = center + toward * r;
        for _ in 0..p.glint_points {
            points.push(glint + gaussian(&mut rng, 0.25 * spec.radar_jitter));
            amps.push(db_to_amplitude(uniform(&mut rng, p.glint_db)));
        }
        let mut placed = 0;
        while placed < p.cap_points {
            let d = gaussian(&mut rng, 1.0);
            let len = d.norm();
            if len < 1e-9 {
                continue;
            }
            let dir = d / len;
            if dir.dot(&toward) < 50f64.to_radians().cos() {
                continue;
            }
            points.push(center + dir * r);
            amps.push(db_to_amplitude(uniform(&mut rng, p.cap_db)));
            placed += 1;
        }
    }
    let clutter_points = push_clutter(spec, &mut rng, &mut points, &mut amps);
    let cloud = RadarCloud::from_amplitudes(points, &amps)?;
    Ok(RadarScene {
        cloud,
        ball_points,
        clutter_points,
    })
}

pub fn render_radar_cloud(spec: &SceneSpec, geometry: &TargetGeometry) -> Result<RadarCloud> {
    render_radar_scene(spec, geometry).map(|s| s.cloud)
}

/// Objects used to measure alignment quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalObject {
    /// Flat metal disk of 5 cm radius.
    Disk,
    /// Flat plus-shaped cutout, 12 cm across.
    Symbol,
    /// Palm and fingers as a union of spheres.
    HandProxy,
}

/// Radar surface sampling pitch for evaluation objects (m).
pub const EVAL_SPACING: f64 = 0.0008;

/// Returns with normal angle above this are not seen by the radar.
pub const MAX_RADAR_INCIDENCE: f64 = core::f64::consts::FRAC_PI_3;

fn hand_spheres(pose: &RigidTransform) -> Vec<(Point3, f64)> {
    let mut spheres = vec![(Point3::new(0.0, 0.01, 0.0), 0.035)];
    for (k, x) in [-0.03, -0.01, 0.01, 0.03].iter().enumerate() {
        let length = [3, 4, 4, 3][k];
        for j in 0..length {
            spheres.push((Point3::new(*x, -0.035 - 0.015 * j as f64, -0.005), 0.009));
        }
    }
    spheres.push((Point3::new(0.045, 0.025, -0.01), 0.011));
    spheres.push((Point3::new(0.058, 0.01, -0.01), 0.01));
    spheres.into_iter().map(|(c, r)| (pose.apply(&c), r)).collect()
}

fn object_surfaces(object: EvalObject, pose: &RigidTransform) -> Vec<Surface> {
    match object {
        EvalObject::Disk => vec![Surface::flat(pose, 0.0, Shape::Disk { radius: 0.05 })],
        EvalObject::Symbol => vec![Surface::flat(pose, 0.0, Shape::Cross { half: 0.06, arm: 0.015 })],
        EvalObject::HandProxy => hand_spheres(pose)
            .into_iter()
            .map(|(center, radius)| Surface::Sphere { center, radius })
            .collect(),
    }
}

/// Ground-truth surface samples (radar frame) with outward normals.
fn sample_surface(object: EvalObject, pose: &RigidTransform) -> Vec<(Point3, Vector3)> {
    let s = EVAL_SPACING;
    let grid = |shape: Shape, half: f64| {
        let n = (half / s).ceil() as i64;
        let mut out = Vec::new();
        for j in -n..=n {
            for i in -n..=n {
                let (x, y) = (i as f64 * s, j as f64 * s);
                if shape.contains(x, y) {
                    out.push((pose.apply(&Point3::new(x, y, 0.0)), pose.apply_vector(&-Vector3::z())));
                }
            }
        }
        out
    };
    match object {
        EvalObject::Disk => grid(Shape::Disk { radius: 0.05 }, 0.05),
        EvalObject::Symbol => grid(Shape::Cross { half: 0.06, arm: 0.015 }, 0.06),
        EvalObject::HandProxy => {
            let spheres = hand_spheres(pose);
            let mut out = Vec::new();
            for (i, &(c, r)) in spheres.iter().enumerate() {
                // Fibonacci lattice at roughly the requested pitch.
                let n = ((4.0 * core::f64::consts::PI * r * r) / (s * s)).ceil() as usize;
                let golden = core::f64::consts::PI * (3.0 - 5f64.sqrt());
                for k in 0..n {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    let nrm = Vector3::new(rho * phi.cos(), rho * phi.sin(), z);
                    let p = c + nrm * r;
                    let inside_other = spheres
                        .iter()
                        .enumerate()
                        .any(|(j, &(c2, r2))| j != i && (p - c2).norm() < r2);
                    if !inside_other {
                        out.push((p, nrm));
                    }
                }
            }
            out
        }
    }
}

/// One evaluation object captured by both sensors. Both sample the same
/// surface, so under the true extrinsic only noise separates the clouds.
pub fn render_eval_object(
    spec: &SceneSpec,
    object: EvalObject,
    camera: &CameraModel,
) -> Result<(DepthCapture, RadarCloud)> {
    spec.validate()?;
    let center = spec.target_pose.apply(&Point3::origin());
    check_radar_range(&center, "evaluation object")?;
    let optical_pose = spec.optical_target_pose();
    check_in_frustum(
        camera,
        &optical_pose.apply(&Point3::origin()),
        0.06,
        "evaluation object",
    )?;
    let surfaces = object_surfaces(object, &optical_pose);
    let colors = vec![OBJECT_COLOR; surfaces.len()];
    let capture = render(&surfaces, &colors, camera, spec.optical_noise, &mut spec.rng(2))?;

    let radar_surfaces = object_surfaces(object, &spec.target_pose);
    let mut rng = spec.rng(3);
    let mut points = Vec::new();
    let mut amps = Vec::new();
    for (p, n) in sample_surface(object, &spec.target_pose) {
        let to_sensor = -p.coords.normalize();
        let facing = n.dot(&to_sensor);
        let facing = if matches!(object, EvalObject::HandProxy) {
            facing
        } else {
            facing.abs()
        };
        if facing < MAX_RADAR_INCIDENCE.cos() {
            continue;
        }
        if matches!(object, EvalObject::HandProxy) {
            let dir = p.coords;
            let occluded = radar_surfaces.iter().any(|s| {
                s.intersect(&Point3::origin(), &dir)
                    .is_some_and(|(t, _)| t < 1.0 - 1e-6)
            });
            if occluded {
                continue;
            }
        }
        points.push(p + gaussian(&mut rng, spec.radar_jitter));
        amps.push(db_to_amplitude(uniform(&mut rng, (-6.0, 0.0)) + 20.0 * facing.log10()));
    }
    let cloud = RadarCloud::from_amplitudes(points, &amps)?;
    Ok((capture, cloud))
}

/// Flat metal plate used by the projective refinement (side length, m).
pub const PLATE_SIZE: f64 = 0.20;
/// Radar sampling pitch on the plate (m).
pub const PLATE_SPACING: f64 = 0.0015;

/// The refinement plate at `spec.target_pose`, plus background clutter on
/// the radar side. The image may crop the plate's outer band.
pub fn render_plate(spec: &SceneSpec, camera: &CameraModel) -> Result<(DepthCapture, RadarCloud)> {
    spec.validate()?;
    let center = spec.target_pose.apply(&Point3::origin());
    check_radar_range(&center, "plate")?;
    let optical_pose = spec.optical_target_pose();
    check_in_frustum(
        camera,
        &optical_pose.apply(&Point3::origin()),
        0.25 * PLATE_SIZE,
        "plate",
    )?;
    let shape = Shape::Square { half: 0.5 * PLATE_SIZE };
    let capture = render(
        &[Surface::flat(&optical_pose, 0.0, shape)],
        &[OBJECT_COLOR],
        camera,
        spec.optical_noise,
        &mut spec.rng(4),
    )?;

    let mut rng = spec.rng(5);
    let mut points = Vec::new();
    let mut amps = Vec::new();
    let n = (0.5 * PLATE_SIZE / PLATE_SPACING).floor() as i64;
    for j in -n..=n {
        for i in -n..=n {
            let p = spec
                .target_pose
                .apply(&Point3::new(i as f64 * PLATE_SPACING, j as f64 * PLATE_SPACING, 0.0));
            points.push(p + gaussian(&mut rng, spec.radar_jitter));
            amps.push(db_to_amplitude(uniform(&mut rng, (-6.0, 0.0))));
        }
    }
    push_clutter(spec, &mut rng, &mut points, &mut amps);
    let cloud = RadarCloud::from_amplitudes(points, &amps)?;
    Ok((capture, cloud))
}
