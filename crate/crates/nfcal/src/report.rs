//! JSON documents written by the command line.

use nfcal_core::evaluation::AlignmentMetrics;
use nfcal_core::pipeline::CalibrationReport;
use nfcal_core::radar::Energy;
use nfcal_core::registration::Refinement;
use nfcal_core::synthetic::GroundTruth;
use nfcal_core::{Matrix3, Point3, RigidTransform, Vector3};
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationJson;
use crate::error::{IoError, Result};

fn xyz(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformJson {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl From<&RigidTransform> for TransformJson {
    fn from(t: &RigidTransform) -> Self {
        let r = t.rotation();
        Self {
            rotation: [0, 1, 2].map(|i| [0, 1, 2].map(|j| r[(i, j)])),
            translation: [t.translation().x, t.translation().y, t.translation().z],
            scale: t.scale(),
        }
    }
}

impl TryFrom<&TransformJson> for RigidTransform {
    type Error = IoError;

    fn try_from(j: &TransformJson) -> Result<Self> {
        let r = Matrix3::from_fn(|i, k| j.rotation[i][k]);
        Ok(RigidTransform::new(r, Vector3::from(j.translation), j.scale)?)
    }
}

/// Ground truth of a simulated scene, radar frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthJson {
    pub seed: u64,
    /// Optical frame to radar frame.
    pub extrinsic: TransformJson,
    /// Target frame to radar frame; the plate and disk share this pose.
    pub target_pose: TransformJson,
    /// Corner ball centers in canonical order.
    pub corners: [[f64; 3]; 4],
    pub anchor: [f64; 3],
}

impl GroundTruthJson {
    pub fn new(seed: u64, truth: &GroundTruth, target_pose: &RigidTransform) -> Self {
        Self {
            seed,
            extrinsic: (&truth.extrinsic).into(),
            target_pose: target_pose.into(),
            corners: truth.corners.each_ref().map(xyz),
            anchor: xyz(&truth.anchor),
        }
    }

    pub fn extrinsic(&self) -> Result<RigidTransform> {
        (&self.extrinsic).try_into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleJson {
    pub center: [f64; 2],
    pub radius: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalJson {
    /// Sphere centers in the optical frame, canonical order.
    pub centers: [[f64; 3]; 4],
    pub inlier_ratios: [f64; 4],
    pub fit_errors: [f64; 4],
    pub circles: [CircleJson; 4],
    pub sample_counts: [usize; 4],
    pub candidate_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyJson {
    pub total: f64,
    pub data: f64,
    pub sphere: f64,
    pub plane: f64,
    pub anchor: f64,
}

impl From<&Energy> for EnergyJson {
    fn from(e: &Energy) -> Self {
        Self {
            total: e.total,
            data: e.data,
            sphere: e.sphere,
            plane: e.plane,
            anchor: e.anchor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarJson {
    /// Corner ball centers in the radar frame, canonical order.
    pub corners: [[f64; 3]; 4],
    pub anchor: [f64; 3],
    pub board_normal: [f64; 3],
    pub energy: EnergyJson,
    pub inlier_ratio: f64,
    pub cluster_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KabschJson {
    pub singular_values: [f64; 3],
    pub expected: [f64; 3],
    pub relative_deviation: f64,
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateJson {
    pub calibration: CalibrationJson,
    pub optical: OpticalJson,
    pub radar: RadarJson,
    pub kabsch: KabschJson,
    /// Present when the input scene carries a ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_error: Option<ExtrinsicErrorJson>,
}

/// Distance between an estimated and a reference extrinsic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicErrorJson {
    pub translation_m: f64,
    pub rotation_deg: f64,
}

impl ExtrinsicErrorJson {
    pub fn between(estimate: &RigidTransform, truth: &RigidTransform) -> Self {
        Self {
            translation_m: estimate.translation_distance_to(truth),
            rotation_deg: estimate.rotation_angle_to(truth).to_degrees(),
        }
    }
}

impl From<&CalibrationReport> for CalibrateJson {
    fn from(r: &CalibrationReport) -> Self {
        let o = &r.optical;
        let t = &r.radar.target;
        let k = &r.kabsch;
        Self {
            calibration: (&r.calibration).into(),
            optical: OpticalJson {
                centers: o.target.centers.each_ref().map(xyz),
                inlier_ratios: o.target.inlier_ratios,
                fit_errors: o.target.fit_errors,
                circles: o.target.circles.each_ref().map(|c| CircleJson {
                    center: [c.center.0, c.center.1],
                    radius: c.radius,
                    score: c.score,
                }),
                sample_counts: o.sample_counts,
                candidate_count: o.candidates.len(),
            },
            radar: RadarJson {
                corners: t.corners.each_ref().map(xyz),
                anchor: xyz(&t.anchor),
                board_normal: (*t.board_plane.normal()).into(),
                energy: (&t.energy).into(),
                inlier_ratio: t.inlier_ratio,
                cluster_count: r.radar.clusters.centers.len(),
            },
            kabsch: KabschJson {
                singular_values: k.singular_values,
                expected: k.expected,
                relative_deviation: k.relative_deviation,
                warning: k.warning,
            },
            ground_truth_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineJson {
    pub calibration: CalibrationJson,
    pub correspondences: usize,
    pub inliers: usize,
    pub initial_rmse: f64,
    pub refined_rmse: f64,
    pub rounds: usize,
}

impl From<&Refinement> for RefineJson {
    fn from(r: &Refinement) -> Self {
        Self {
            calibration: (&r.calibration).into(),
            correspondences: r.correspondences,
            inliers: r.inliers,
            initial_rmse: r.initial_rmse,
            refined_rmse: r.refined_rmse,
            rounds: r.rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub chamfer: f64,
    pub rmse_optical_to_radar: f64,
    pub rmse_radar_to_optical: f64,
    pub inlier_fraction: f64,
    pub optical_points: usize,
    pub radar_points: usize,
}

impl MetricsJson {
    pub fn new(m: &AlignmentMetrics, optical_points: usize, radar_points: usize) -> Self {
        Self {
            chamfer: m.chamfer,
            rmse_optical_to_radar: m.rmse_optical_to_radar,
            rmse_radar_to_optical: m.rmse_radar_to_optical,
            inlier_fraction: m.inlier_fraction,
            optical_points,
            radar_points,
        }
    }

    /// Aligned text table.
    pub fn table(&self) -> String {
        let rows = [
            ("chamfer (mm)", format!("{:.4}", self.chamfer * 1e3)),
            (
                "rmse optical->radar (mm)",
                format!("{:.4}", self.rmse_optical_to_radar * 1e3),
            ),
            (
                "rmse radar->optical (mm)",
                format!("{:.4}", self.rmse_radar_to_optical * 1e3),
            ),
            ("inlier fraction", format!("{:.4}", self.inlier_fraction)),
            ("optical points", self.optical_points.to_string()),
            ("radar points", self.radar_points.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k:<26}{v:>12}\n")).collect()
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}
