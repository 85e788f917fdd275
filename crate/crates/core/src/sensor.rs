//! Sensor-side data: pinhole intrinsics, RGB-D captures and radar clouds.

use alloc::format;
use alloc::vec::Vec;

// Unused whenever std is linked in, which provides the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Pinhole intrinsics in pixels. Pixel `(u, v)` addresses the pixel center at
/// integer coordinates; `v` grows downward, so the optical frame is
/// x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intrinsics = Self { fx, fy, cx, cy };
        intrinsics.validate()?;
        Ok(intrinsics)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::validation("intrinsics", "focal lengths must be positive"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::validation("intrinsics", "principal point must be finite"));
        }
        Ok(())
    }

    /// Lifts pixel `(u, v)` at depth `z` to the optical frame.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Point3 {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Pinhole projection; `None` behind the camera.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        if !(p.z > 0.0) {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// Depth map in meters (0 = invalid) with an aligned 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthCapture {
    width: usize,
    height: usize,
    depth: Vec<f32>,
    rgb: Vec<[u8; 3]>,
    intrinsics: CameraIntrinsics,
}

impl DepthCapture {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f32>,
        rgb: Vec<[u8; 3]>,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        let count = width
            .checked_mul(height)
            .ok_or_else(|| Error::validation("capture", "dimensions overflow"))?;
        if width == 0 || height == 0 {
            return Err(Error::validation("capture", "empty image"));
        }
        if depth.len() != count || rgb.len() != count {
            return Err(Error::validation(
                "capture",
                format!(
                    "expected {count} pixels, depth has {}, rgb has {}",
                    depth.len(),
                    rgb.len()
                ),
            ));
        }
        if let Some(bad) = depth.iter().find(|d| d.is_finite() && **d < 0.0) {
            return Err(Error::validation("capture", format!("negative depth {bad}")));
        }
        intrinsics.validate()?;
        // Non-finite depth is the invalid-pixel sentinel.
        let depth = depth.into_iter().map(|d| if d.is_finite() { d } else { 0.0 }).collect();
        Ok(Self {
            width,
            height,
            depth,
            rgb,
            intrinsics,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    /// Row-major depth samples.
    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    pub fn rgb(&self) -> &[[u8; 3]] {
        &self.rgb
    }

    /// Valid depth at `(u, v)` in meters.
    pub fn depth_at(&self, u: usize, v: usize) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let d = self.depth[v * self.width + u];
        (d > 0.0).then_some(d as f64)
    }

    pub fn rgb_at(&self, u: usize, v: usize) -> [u8; 3] {
        self.rgb[v * self.width + u]
    }

    pub fn point_at(&self, u: usize, v: usize) -> Option<Point3> {
        self.depth_at(u, v)
            .map(|z| self.intrinsics.backproject(u as f64, v as f64, z))
    }

    /// All valid pixels lifted to 3D, row-major.
    pub fn to_points(&self) -> Vec<Point3> {
        let mut out = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                if let Some(p) = self.point_at(u, v) {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Radar point cloud with peak-normalized confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCloud {
    points: Vec<Point3>,
    confidence: Vec<f64>,
    amplitude_db: Vec<f64>,
}

impl RadarCloud {
    /// Normalizes raw (linear) amplitudes by their peak: confidence is
    /// `a / a_max` and `amplitude_db` is `20·log10(a / a_max)`.
    pub fn from_amplitudes(points: Vec<Point3>, amplitudes: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("radar cloud has no points"));
        }
        if points.len() != amplitudes.len() {
            return Err(Error::validation(
                "radar cloud",
                format!("{} points but {} amplitudes", points.len(), amplitudes.len()),
            ));
        }
        if let Some(p) = points.iter().find(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::validation("radar cloud", format!("non-finite point {p:?}")));
        }
        if let Some(a) = amplitudes.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::validation("radar cloud", format!("invalid amplitude {a}")));
        }
        let peak = amplitudes.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::validation("radar cloud", "all amplitudes are zero"));
        }
        let confidence: Vec<f64> = amplitudes.iter().map(|a| a / peak).collect();
        let amplitude_db = confidence.iter().map(|c| 20.0 * c.log10()).collect();
        Ok(Self {
            points,
            confidence,
            amplitude_db,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn amplitude_db(&self) -> &[f64] {
        &self.amplitude_db
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5).unwrap()
    }

    #[test]
    fn principal_point_backprojects_onto_axis() {
        let p = intrinsics().backproject(319.5, 239.5, 0.3);
        assert_eq!(p, Point3::new(0.0, 0.0, 0.3));
    }

    #[test]
    fn projection_inverts_backprojection() {
        let k = intrinsics();
        for &(u, v, z) in &[(0.0, 0.0, 0.25), (639.0, 479.0, 0.9), (100.25, 300.75, 0.4)] {
            let (pu, pv) = k.project(&k.backproject(u, v, z)).unwrap();
            assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }
        assert!(k.project(&Point3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn capture_validates_dimensions_and_depth() {
        let k = intrinsics();
        assert!(DepthCapture::new(2, 2, vec![0.0; 3], vec![[0; 3]; 4], k).is_err());
        assert!(DepthCapture::new(2, 2, vec![0.0, 0.1, -0.2, 0.0], vec![[0; 3]; 4], k).is_err());
        let c = DepthCapture::new(2, 2, vec![f32::NAN, 0.5, 0.25, 1.0], vec![[1, 2, 3]; 4], k).unwrap();
        assert_eq!(c.depth(), &[0.0, 0.5, 0.25, 1.0]);
        assert_eq!(c.depth_at(0, 0), None);
        assert_eq!(c.depth_at(1, 0), Some(0.5));
    }

    #[test]
    fn single_point_is_its_own_peak() {
        let cloud = RadarCloud::from_amplitudes(vec![Point3::new(0.0, 0.0, 0.3)], &[0.42]).unwrap();
        assert_eq!(cloud.confidence(), &[1.0]);
        assert_eq!(cloud.amplitude_db(), &[0.0]);
    }

    #[test]
    fn tenfold_amplitude_is_twenty_db() {
        let cloud = RadarCloud::from_amplitudes(
            vec![Point3::new(0.0, 0.0, 0.3), Point3::new(0.1, 0.0, 0.3)],
            &[1.0, 0.1],
        )
        .unwrap();
        assert_eq!(cloud.amplitude_db()[0], 0.0);
        assert!((cloud.amplitude_db()[1] + 20.0).abs() < 1e-12);
        assert!((cloud.confidence()[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(matches!(
            RadarCloud::from_amplitudes(Vec::new(), &[]),
            Err(Error::EmptyInput(_))
        ));
    }
}
