//! End-to-end calibration: optical detection and localization, radar
//! detection and localization, then registration of the ordered centers.

use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::geometry::Point3;
use crate::optical::{
    backproject_circle, detect_circles, filter_circles, fit_spheres_ransac, CircleCandidate, CircleFilterParams,
    HoughParams, OpticalTarget, SphereFitParams, SurfaceSamples,
};
use crate::radar::{
    detect_clusters, localize_radar_target, ClusterParams, ClusterSet, LocalizationParams, RadarTarget,
};
use crate::registration::{
    kabsch_register_detailed, CorrespondenceSet, KabschDiagnostics, RefineParams, RigidCalibration,
};
use crate::sensor::{DepthCapture, RadarCloud};
use crate::target::TargetGeometry;

/// Every tunable of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    pub geometry: TargetGeometry,
    /// Depth clamp before circle detection (m).
    pub max_range: f64,
    pub hough: HoughParams,
    pub circle_filter: CircleFilterParams,
    pub sphere_fit: SphereFitParams,
    pub clusters: ClusterParams,
    pub localization: LocalizationParams,
    /// A-priori optical-to-radar scale.
    pub scale: f64,
    pub refine: RefineParams,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            geometry: TargetGeometry::default(),
            max_range: 1.0,
            hough: HoughParams::default(),
            circle_filter: CircleFilterParams::default(),
            sphere_fit: SphereFitParams::default(),
            clusters: ClusterParams::default(),
            localization: LocalizationParams::default(),
            scale: 1.0,
            refine: RefineParams::default(),
        }
    }
}

/// Pipeline stage that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    OpticalDetection,
    OpticalLocalization,
    RadarDetection,
    RadarLocalization,
    Registration,
    Refinement,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::OpticalDetection => "optical_detection",
            Stage::OpticalLocalization => "optical_localization",
            Stage::RadarDetection => "radar_detection",
            Stage::RadarLocalization => "radar_localization",
            Stage::Registration => "registration",
            Stage::Refinement => "refinement",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage.name(), self.error)
    }
}

impl core::error::Error for StageError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn at(stage: Stage) -> impl FnOnce(Error) -> StageError {
    move |error| StageError { stage, error }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalResult {
    pub candidates: Vec<CircleCandidate>,
    pub target: OpticalTarget,
    pub sample_counts: [usize; 4],
}

pub fn localize_optical(capture: &DepthCapture, params: &CalibrationParams) -> Result<OpticalResult, StageError> {
    let candidates = detect_circles(capture, params.max_range, &params.hough).map_err(at(Stage::OpticalDetection))?;
    let circles = filter_circles(&candidates, capture, &params.circle_filter).map_err(at(Stage::OpticalDetection))?;
    let mut clouds: [SurfaceSamples; 4] = Default::default();
    for (cloud, circle) in clouds.iter_mut().zip(&circles) {
        *cloud = backproject_circle(capture, circle).map_err(at(Stage::OpticalDetection))?;
    }
    let target = fit_spheres_ransac(&clouds, &circles, &params.geometry, &params.sphere_fit)
        .map_err(at(Stage::OpticalLocalization))?;
    Ok(OpticalResult {
        candidates,
        target,
        sample_counts: clouds.each_ref().map(|c| c.len()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarResult {
    pub clusters: ClusterSet,
    pub target: RadarTarget,
}

pub fn localize_radar(cloud: &RadarCloud, params: &CalibrationParams) -> Result<RadarResult, StageError> {
    let clusters = detect_clusters(cloud, &params.clusters).map_err(at(Stage::RadarDetection))?;
    let target = localize_radar_target(&clusters, &params.geometry, &params.localization)
        .map_err(at(Stage::RadarLocalization))?;
    Ok(RadarResult { clusters, target })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub optical: OpticalResult,
    pub radar: RadarResult,
    pub calibration: RigidCalibration,
    pub kabsch: KabschDiagnostics,
}

/// Registers the ordered sphere centers (optical) onto the ordered corner
/// balls (radar).
pub fn register_targets(
    optical: &[Point3; 4],
    radar: &[Point3; 4],
    scale: f64,
) -> Result<(RigidCalibration, KabschDiagnostics), StageError> {
    let pairs = CorrespondenceSet::from_centers(optical, radar).map_err(at(Stage::Registration))?;
    kabsch_register_detailed(&pairs, scale).map_err(at(Stage::Registration))
}

pub fn calibrate(
    capture: &DepthCapture,
    cloud: &RadarCloud,
    params: &CalibrationParams,
) -> Result<CalibrationReport, StageError> {
    let optical = localize_optical(capture, params)?;
    let radar = localize_radar(cloud, params)?;
    let (calibration, kabsch) = register_targets(&optical.target.centers, &radar.target.corners, params.scale)?;
    Ok(CalibrationReport {
        optical,
        radar,
        calibration,
        kabsch,
    })
}
