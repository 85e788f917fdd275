//! 3D primitives shared by every stage: points, scaled rigid transforms,
//! planes and spheres.
//!
//! All lengths are meters. The only place a non-unit scale enters is the
//! optical-to-radar registration, where [`RigidTransform::scale`] carries the
//! a-priori unit conversion.

use nalgebra::{Rotation3, SymmetricEigen, Unit};

// Unused whenever std is linked in, which provides the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3 = nalgebra::Matrix3<f64>;

/// Per-entry tolerance for `RᵀR = I`, `det R = 1` and unit normals.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Rotation, translation and uniform scale: `p ↦ R·(s·p) + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3,
    translation: Vector3,
    scale: f64,
}

impl RigidTransform {
    /// Validates orthonormality, `det = +1` and a positive finite scale.
    pub fn new(rotation: Matrix3, translation: Vector3, scale: f64) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("transform", "non-finite entries"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::validation(
                "transform",
                alloc::format!("scale {scale} must be positive"),
            ));
        }
        let gram = rotation.transpose() * rotation;
        let off = (gram - Matrix3::identity()).amax();
        if off > ORTHONORMAL_TOLERANCE {
            return Err(Error::validation(
                "transform",
                alloc::format!("rotation is not orthonormal (max |RᵀR - I| = {off:e})"),
            ));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::validation(
                "transform",
                alloc::format!("rotation determinant {det} is not +1"),
            ));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// Rotation about `axis` by `angle` radians, then translation, unit scale.
    pub fn from_axis_angle(axis: Vector3, angle: f64, translation: Vector3) -> Self {
        let rotation = if axis.norm() == 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
        };
        Self {
            rotation,
            translation,
            scale: 1.0,
        }
    }

    /// Roll/pitch/yaw about the fixed x, y, z axes (radians).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3) -> Self {
        Self {
            rotation: *Rotation3::from_euler_angles(roll, pitch, yaw).matrix(),
            translation,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        self.scale = scale;
        Self::new(self.rotation, self.translation, scale)
    }

    pub fn rotation(&self) -> &Matrix3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3 {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * (p.coords * self.scale) + self.translation)
    }

    /// Applies rotation and scale only.
    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * (v * self.scale)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_scale = 1.0 / self.scale;
        Self {
            rotation: rt,
            translation: -(rt * self.translation) * inv_scale,
            scale: inv_scale,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * (other.translation * self.scale) + self.translation,
            scale: self.scale * other.scale,
        }
    }

    /// Geodesic angle (radians) between the two rotations.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let relative = self.rotation.transpose() * other.rotation;
        let cos = ((relative.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        cos.acos()
    }

    pub fn translation_distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn apply_transform(transform: &RigidTransform, p: &Point3) -> Point3 {
    transform.apply(p)
}

/// Plane through `reference` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Vector3,
    reference: Point3,
}

impl Plane {
    pub fn new(normal: Vector3, reference: Point3) -> Result<Self> {
        let len = normal.norm();
        if !len.is_finite() || (len - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::validation(
                "plane",
                alloc::format!("normal length {len} is not 1"),
            ));
        }
        if !reference.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("plane", "non-finite reference point"));
        }
        Ok(Self { normal, reference })
    }

    /// Normalizes `normal` first.
    pub fn from_normal(normal: Vector3, reference: Point3) -> Result<Self> {
        let len = normal.norm();
        if !(len.is_finite() && len > 0.0) {
            return Err(Error::DegenerateGeometry("zero plane normal"));
        }
        Self::new(normal / len, reference)
    }

    pub fn normal(&self) -> &Vector3 {
        &self.normal
    }

    pub fn reference(&self) -> &Point3 {
        &self.reference
    }

    /// `⟨p − k, n⟩`.
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        (p - self.reference).dot(&self.normal)
    }

    /// `c − n·⟨c − k, n⟩`.
    pub fn project(&self, c: &Point3) -> Point3 {
        c - self.normal * self.signed_distance(c)
    }

    pub fn transformed(&self, transform: &RigidTransform) -> Plane {
        let normal = transform.rotation() * self.normal;
        Plane {
            normal,
            reference: transform.apply(&self.reference),
        }
    }
}

pub fn point_plane_distance(p: &Point3, plane: &Plane) -> f64 {
    plane.signed_distance(p)
}

pub fn project_onto_plane(c: &Point3, plane: &Plane) -> Point3 {
    plane.project(c)
}

/// Orients a normal so that it faces the sensor (`z ≤ 0`); when it is
/// perpendicular to the viewing axis, `x ≥ 0`, then `y ≥ 0`.
pub fn orient_toward_sensor(n: Vector3) -> Vector3 {
    const EPS: f64 = 1e-12;
    let flip = if n.z.abs() > EPS {
        n.z > 0.0
    } else if n.x.abs() > EPS {
        n.x < 0.0
    } else {
        n.y < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

pub fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Some(Point3::from(sum / points.len() as f64))
}

/// Total-least-squares plane: through the centroid, normal along the
/// direction of least spread, oriented by [`orient_toward_sensor`].
pub fn fit_plane_tls(points: &[Point3]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry("plane fit needs at least three points"));
    }
    let center = centroid(points).expect("non-empty");
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - center;
        scatter += d * d.transpose();
    }
    if !scatter.iter().all(|v| v.is_finite()) {
        return Err(Error::validation("points", "non-finite coordinates"));
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (min, mid, max) = (order[0], order[1], order[2]);
    let largest = eig.eigenvalues[max];
    if largest <= 0.0 || eig.eigenvalues[mid] <= 1e-12 * largest {
        return Err(Error::DegenerateGeometry("points are collinear or coincident"));
    }
    let normal = orient_toward_sensor(eig.eigenvectors.column(min).normalize());
    Ok(Plane {
        normal,
        reference: center,
    })
}

/// Sphere with known center and radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereModel {
    pub center: Point3,
    pub radius: f64,
}

impl SphereModel {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::validation(
                "sphere",
                alloc::format!("radius {radius} must be positive"),
            ));
        }
        Ok(Self { center, radius })
    }

    /// Unsigned distance from `p` to the sphere surface.
    pub fn surface_distance(&self, p: &Point3) -> f64 {
        ((p - self.center).norm() - self.radius).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::FRAC_PI_2;
    use proptest::prelude::*;

    fn random_transform(rx: f64, ry: f64, rz: f64, t: [f64; 3], s: f64) -> RigidTransform {
        RigidTransform::from_euler(rx, ry, rz, Vector3::from(t))
            .with_scale(s)
            .unwrap()
    }

    #[test]
    fn identity_leaves_points_alone() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(RigidTransform::identity().apply(&p), p);
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = RigidTransform::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let q = t.apply(&Point3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(q, Point3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn millimeter_scale_then_offset() {
        let t = RigidTransform::new(Matrix3::identity(), Vector3::new(0.1, 0.0, 0.0), 0.001).unwrap();
        let p = Point3::new(1000.0, 0.0, 0.0);
        let q = t.apply(&p);
        assert_abs_diff_eq!(q, Point3::new(1.1, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(t.inverse().apply(&q), p, epsilon = 1e-9);
    }

    #[test]
    fn rejects_invalid_transforms() {
        let mirror = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(mirror, Vector3::zeros(), 1.0).is_err());
        let sheared = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(sheared, Vector3::zeros(), 1.0).is_err());
        assert!(RigidTransform::new(Matrix3::identity(), Vector3::zeros(), 0.0).is_err());
        assert!(RigidTransform::new(Matrix3::identity(), Vector3::zeros(), f64::NAN).is_err());
    }

    #[test]
    fn plane_distance_and_projection() {
        let plane = Plane::new(Vector3::z(), Point3::origin()).unwrap();
        assert_eq!(plane.signed_distance(&Point3::new(5.0, 5.0, 2.0)), 2.0);
        assert_eq!(plane.signed_distance(&Point3::new(3.0, -1.0, 0.0)), 0.0);
        assert_eq!(plane.project(&Point3::new(1.0, 2.0, 3.0)), Point3::new(1.0, 2.0, 0.0));
        let on = Point3::new(-4.0, 7.0, 0.0);
        assert_eq!(plane.project(&on), on);
    }

    #[test]
    fn signed_distance_matches_dense_search() {
        // Oracle: minimize |p - q| over a dense grid of points q on the plane.
        let normal = Vector3::new(0.3, -0.5, 0.8).normalize();
        let reference = Point3::new(0.1, 0.2, 0.3);
        let plane = Plane::new(normal, reference).unwrap();
        let p = Point3::new(0.4, -0.1, 0.6);
        let u = normal.cross(&Vector3::x()).normalize();
        let v = normal.cross(&u);
        let mut best = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let a = -1.0 + 2.0 * i as f64 / steps as f64;
                let b = -1.0 + 2.0 * j as f64 / steps as f64;
                let q = reference + u * a + v * b;
                best = best.min((p - q).norm());
            }
        }
        let d = plane.signed_distance(&p);
        assert!((d.abs() - best).abs() < 1e-4, "{d} vs {best}");
    }

    #[test]
    fn tls_plane_on_exact_coplanar_points() {
        let pts = [
            Point3::new(0.0, 0.0, 0.3),
            Point3::new(0.06, 0.0, 0.3),
            Point3::new(0.0, 0.06, 0.3),
            Point3::new(0.06, 0.06, 0.3),
        ];
        let plane = fit_plane_tls(&pts).unwrap();
        assert_abs_diff_eq!(*plane.normal(), Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(plane.reference().z, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn tls_plane_with_symmetric_perturbation() {
        // ±1 mm alternating perturbation of a 6 cm square on z = 0.3; the
        // oracle scans plane tilts and offsets for the least L2 residual.
        let base = [
            Point3::new(0.0, 0.0, 0.3),
            Point3::new(0.06, 0.0, 0.3),
            Point3::new(0.0, 0.06, 0.3),
            Point3::new(0.06, 0.06, 0.3),
            Point3::new(0.03, 0.03, 0.3),
        ];
        let offsets = [0.001, -0.001, -0.001, 0.001, 0.0];
        let pts: alloc::vec::Vec<Point3> = base
            .iter()
            .zip(offsets)
            .map(|(p, dz)| Point3::new(p.x, p.y, p.z + dz))
            .collect();
        let plane = fit_plane_tls(&pts).unwrap();
        let rms =
            |pl: &Plane| (pts.iter().map(|p| pl.signed_distance(p).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
        let mut best = f64::INFINITY;
        for i in -20..=20 {
            for j in -20..=20 {
                for k in -20..=20 {
                    let n = Vector3::new(i as f64 * 1e-3, j as f64 * 1e-3, -1.0).normalize();
                    let r = Point3::new(0.03, 0.03, 0.3 + k as f64 * 1e-4);
                    best = best.min(rms(&Plane::new(n, r).unwrap()));
                }
            }
        }
        assert!(rms(&plane) <= best + 1e-12);
        // True plane is z = 0.3: the fitted plane stays within 0.5 mm RMS of it.
        let truth = Plane::new(Vector3::new(0.0, 0.0, -1.0), Point3::new(0.0, 0.0, 0.3)).unwrap();
        let dev = (base
            .iter()
            .map(|p| truth.signed_distance(&plane.project(p)).powi(2))
            .sum::<f64>()
            / base.len() as f64)
            .sqrt();
        assert!(dev < 5e-4, "{dev}");
    }

    #[test]
    fn tls_plane_rejects_collinear() {
        let pts = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(2.0, 2.0, 2.0),
        ];
        assert!(matches!(fit_plane_tls(&pts), Err(Error::DegenerateGeometry(_))));
        assert!(fit_plane_tls(&pts[..2]).is_err());
    }

    #[test]
    fn normal_orientation_convention() {
        assert_eq!(
            orient_toward_sensor(Vector3::new(0.0, 0.0, 1.0)),
            Vector3::new(0.0, 0.0, -1.0)
        );
        assert_eq!(
            orient_toward_sensor(Vector3::new(-1.0, 0.0, 0.0)),
            Vector3::new(1.0, 0.0, 0.0)
        );
        assert_eq!(
            orient_toward_sensor(Vector3::new(0.0, -1.0, 0.0)),
            Vector3::new(0.0, 1.0, 0.0)
        );
    }

    fn arb_point() -> impl Strategy<Value = Point3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y, z)| Point3::new(x, y, z))
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            -3.0f64..3.0,
            -1.5f64..1.5,
            -3.0f64..3.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            0.01f64..10.0,
        )
            .prop_map(|(a, b, c, x, y, z, s)| random_transform(a, b, c, [x, y, z], s))
    }

    proptest! {
        #[test]
        fn transforms_scale_distances(t in arb_transform(), p in arb_point(), q in arb_point()) {
            let d = (t.apply(&p) - t.apply(&q)).norm();
            prop_assert!((d - t.scale() * (p - q).norm()).abs() < 1e-9);
        }

        #[test]
        fn inverse_round_trips(t in arb_transform(), p in arb_point()) {
            let back = t.inverse().apply(&t.apply(&p));
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn compose_matches_sequential(a in arb_transform(), b in arb_transform(), p in arb_point()) {
            let lhs = a.compose(&b).apply(&p);
            let rhs = a.apply(&b.apply(&p));
            prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + rhs.coords.norm()));
        }

        #[test]
        fn projection_is_idempotent(
            n in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_filter("nonzero", |v| v.0.abs() + v.1.abs() + v.2.abs() > 1e-3),
            k in arb_point(),
            c in arb_point(),
        ) {
            let plane = Plane::from_normal(Vector3::new(n.0, n.1, n.2), k).unwrap();
            let once = plane.project(&c);
            prop_assert!(plane.signed_distance(&once).abs() < 1e-9);
            prop_assert!((c - once).cross(plane.normal()).norm() < 1e-9);
            prop_assert!((plane.project(&once) - once).norm() < 1e-12);
        }

        #[test]
        fn tls_plane_follows_rigid_motion(
            t in arb_transform(),
            raw in proptest::collection::vec(arb_point(), 4..12),
        ) {
            // Thin slab so the normal is well separated from the in-plane spread.
            let pts: alloc::vec::Vec<Point3> =
                raw.iter().map(|p| Point3::new(p.x, p.y, 0.3 + 0.01 * p.z)).collect();
            let rigid = RigidTransform::new(*t.rotation(), *t.translation(), 1.0).unwrap();
            let Ok(plane) = fit_plane_tls(&pts) else { return Ok(()); };
            let moved: alloc::vec::Vec<Point3> = pts.iter().map(|p| rigid.apply(p)).collect();
            let moved_plane = fit_plane_tls(&moved).unwrap();
            let expected = plane.transformed(&rigid);
            let align = moved_plane.normal().dot(expected.normal()).abs();
            prop_assert!((align - 1.0).abs() < 1e-9);
            prop_assert!((moved_plane.reference() - expected.reference()).norm() < 1e-9);
        }
    }
}
