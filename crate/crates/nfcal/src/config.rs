//! TOML configuration. Every key is optional and defaults to the values
//! listed in the README; unknown keys are rejected.

use std::path::Path;

use nfcal_core::optical::{CircleFilterParams, HoughParams, SphereFitParams};
use nfcal_core::ordering::Orientation;
use nfcal_core::pipeline::CalibrationParams;
use nfcal_core::radar::{ClusterParams, EnergyWeights, LocalizationParams};
use nfcal_core::registration::RefineParams;
use nfcal_core::synthetic::{CameraModel, SceneSampler};
use nfcal_core::{CameraIntrinsics, TargetGeometry, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{self, IoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seed of every RANSAC stream.
    pub seed: u64,
    /// Inlier-ratio band of the RANSAC acceptance rule, shared by all stages.
    pub t_inl: f64,
    pub target: TargetConfig,
    pub optical: OpticalConfig,
    pub radar: RadarConfig,
    pub registration: RegistrationConfig,
    pub refine: RefineConfig,
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub edge_length: f64,
    pub board_offset: f64,
    pub styrofoam_radius: f64,
    pub metal_ball_diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalConfig {
    pub max_range: f64,
    pub ransac_iters_optical: usize,
    pub sample_size: usize,
    pub inlier_eps: f64,
    pub min_inlier_ratio: f64,
    pub palette: Vec<[u8; 3]>,
    pub color_tol: f64,
    pub size_tol: f64,
    pub hough_min_radius: f64,
    pub hough_max_radius: f64,
    pub hough_edge_percentile: f64,
    pub hough_min_gradient: f64,
    pub hough_min_votes: u32,
    pub hough_min_center_distance: f64,
    pub hough_max_candidates: usize,
    pub hough_min_support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    pub t_db: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_clusters: usize,
    pub m_samples: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub plane_eps: f64,
    pub energy_reject: f64,
    pub anchor_in_inlier_ratio: bool,
    pub up: [f64; 3],
    pub right: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// A-priori optical-to-radar scale.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub ransac_iters_refine: usize,
    pub corr_gate: f64,
    pub min_correspondences: usize,
    pub sample_size: usize,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Seed of the first scene.
    pub seed: u64,
    pub count: usize,
    pub distance_min: f64,
    pub distance_max: f64,
    pub max_tilt_deg: f64,
    pub max_roll_deg: f64,
    pub max_offset: f64,
    pub extrinsic_rotation_deg: f64,
    pub extrinsic_translation: [f64; 3],
    pub optical_noise: f64,
    pub radar_jitter: f64,
    pub clutter_count: usize,
    pub clutter_half_extent: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            t_inl: 0.05,
            target: TargetConfig::default(),
            optical: OpticalConfig::default(),
            radar: RadarConfig::default(),
            registration: RegistrationConfig::default(),
            refine: RefineConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

impl Default for TargetConfig {
    fn default() -> Self {
        let g = TargetGeometry::default();
        Self {
            edge_length: g.edge_length(),
            board_offset: g.board_offset(),
            styrofoam_radius: g.styrofoam_radius(),
            metal_ball_diameter: g.metal_ball_diameter(),
        }
    }
}

impl Default for OpticalConfig {
    fn default() -> Self {
        let h = HoughParams::default();
        let f = CircleFilterParams::default();
        let s = SphereFitParams::default();
        Self {
            max_range: CalibrationParams::default().max_range,
            ransac_iters_optical: s.iterations,
            sample_size: s.sample_size,
            inlier_eps: s.inlier_eps,
            min_inlier_ratio: s.min_inlier_ratio,
            palette: f.palette,
            color_tol: f.color_tolerance,
            size_tol: f.size_tolerance,
            hough_min_radius: h.min_radius,
            hough_max_radius: h.max_radius,
            hough_edge_percentile: h.edge_percentile,
            hough_min_gradient: h.min_gradient,
            hough_min_votes: h.min_votes,
            hough_min_center_distance: h.min_center_distance,
            hough_max_candidates: h.max_candidates,
            hough_min_support: h.min_support,
        }
    }
}

impl Default for RadarConfig {
    fn default() -> Self {
        let c = ClusterParams::default();
        let l = LocalizationParams::default();
        Self {
            t_db: c.t_db,
            t_min: c.t_min,
            t_max: c.t_max,
            n_clusters: c.n_clusters,
            m_samples: c.m_samples,
            alpha: l.weights.alpha,
            beta: l.weights.beta,
            gamma: l.weights.gamma,
            plane_eps: l.plane_eps,
            energy_reject: l.energy_reject,
            anchor_in_inlier_ratio: l.anchor_in_inlier_ratio,
            up: l.orientation.up.into(),
            right: l.orientation.right.into(),
        }
    }
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl Default for RefineConfig {
    fn default() -> Self {
        let r = RefineParams::default();
        Self {
            ransac_iters_refine: r.iterations,
            corr_gate: r.correspondence_gate,
            min_correspondences: r.min_correspondences,
            sample_size: r.sample_size,
            rounds: r.rounds,
        }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let s = SceneSampler::default();
        let c = CameraModel::default();
        Self {
            seed: 0,
            count: 1,
            distance_min: s.distance.0,
            distance_max: s.distance.1,
            max_tilt_deg: degrees(s.max_tilt),
            max_roll_deg: degrees(s.max_roll),
            max_offset: s.max_offset,
            extrinsic_rotation_deg: degrees(s.extrinsic_rotation),
            extrinsic_translation: s.extrinsic_translation.into(),
            optical_noise: s.optical_noise,
            radar_jitter: s.radar_jitter,
            clutter_count: s.clutter_count,
            clutter_half_extent: s.clutter_half_extent.into(),
            width: c.width,
            height: c.height,
            fx: c.intrinsics.fx,
            fy: c.intrinsics.fy,
            cx: c.intrinsics.cx,
            cy: c.intrinsics.cy,
        }
    }
}

/// Degrees rounded to 1e-9 so defaults print as written.
fn degrees(radians: f64) -> f64 {
    (radians.to_degrees() * 1e9).round() / 1e9
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> IoError {
    IoError::Config(format!("{key}: {reason}"))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} must be positive")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} must be non-negative")))
    }
}

fn unit_interval(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} must lie in [0, 1]")))
    }
}

fn unit_vector(key: &str, v: [f64; 3]) -> Result<Vector3> {
    let v = Vector3::from(v);
    let n = v.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(invalid(key, "must be a non-zero vector"));
    }
    Ok(v / n)
}

impl Config {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| IoError::Config(e.message().to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| IoError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(path) => {
                String::from_utf8(error::read(path)?).map_err(|_| IoError::Config("config is not UTF-8".into()))?
            }
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.sampler()?;
        self.camera()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<TargetGeometry> {
        let t = &self.target;
        TargetGeometry::new(t.edge_length, t.board_offset, t.styrofoam_radius, t.metal_ball_diameter)
            .map_err(|e| invalid("target", e))
    }

    pub fn params(&self) -> Result<CalibrationParams> {
        let (o, r, f) = (&self.optical, &self.radar, &self.refine);
        unit_interval("t_inl", self.t_inl)?;
        positive("optical.max_range", o.max_range)?;
        positive("optical.inlier_eps", o.inlier_eps)?;
        unit_interval("optical.min_inlier_ratio", o.min_inlier_ratio)?;
        non_negative("optical.color_tol", o.color_tol)?;
        non_negative("optical.size_tol", o.size_tol)?;
        positive("optical.hough_min_radius", o.hough_min_radius)?;
        if !(o.hough_max_radius >= o.hough_min_radius) {
            return Err(invalid(
                "optical.hough_max_radius",
                "must not be below hough_min_radius",
            ));
        }
        unit_interval("optical.hough_edge_percentile", o.hough_edge_percentile)?;
        non_negative("optical.hough_min_gradient", o.hough_min_gradient)?;
        non_negative("optical.hough_min_center_distance", o.hough_min_center_distance)?;
        unit_interval("optical.hough_min_support", o.hough_min_support)?;
        if o.ransac_iters_optical == 0 || o.sample_size < 3 {
            return Err(invalid(
                "optical",
                "ransac_iters_optical must be positive and sample_size at least 3",
            ));
        }
        non_negative("radar.t_db", r.t_db)?;
        positive("radar.t_min", r.t_min)?;
        positive("radar.t_max", r.t_max)?;
        if r.n_clusters < 5 || r.m_samples == 0 {
            return Err(invalid("radar", "n_clusters must be at least 5 and m_samples positive"));
        }
        for (k, v) in [
            ("radar.alpha", r.alpha),
            ("radar.beta", r.beta),
            ("radar.gamma", r.gamma),
        ] {
            non_negative(k, v)?;
        }
        positive("radar.plane_eps", r.plane_eps)?;
        positive("radar.energy_reject", r.energy_reject)?;
        let up = unit_vector("radar.up", r.up)?;
        let right = unit_vector("radar.right", r.right)?;
        if up.dot(&right).abs() > 0.5 {
            return Err(invalid("radar.right", "must be roughly perpendicular to radar.up"));
        }
        positive("registration.scale", self.registration.scale)?;
        positive("refine.corr_gate", f.corr_gate)?;
        if f.ransac_iters_refine == 0 || f.sample_size < 3 || f.rounds == 0 {
            return Err(invalid(
                "refine",
                "ransac_iters_refine and rounds must be positive, sample_size at least 3",
            ));
        }
        Ok(CalibrationParams {
            geometry: self.geometry()?,
            max_range: o.max_range,
            hough: HoughParams {
                min_radius: o.hough_min_radius,
                max_radius: o.hough_max_radius,
                edge_percentile: o.hough_edge_percentile,
                min_gradient: o.hough_min_gradient,
                min_votes: o.hough_min_votes,
                min_center_distance: o.hough_min_center_distance,
                max_candidates: o.hough_max_candidates,
                min_support: o.hough_min_support,
            },
            circle_filter: CircleFilterParams {
                palette: o.palette.clone(),
                color_tolerance: o.color_tol,
                size_tolerance: o.size_tol,
            },
            sphere_fit: SphereFitParams {
                iterations: o.ransac_iters_optical,
                sample_size: o.sample_size,
                inlier_eps: o.inlier_eps,
                inlier_threshold: self.t_inl,
                min_inlier_ratio: o.min_inlier_ratio,
                seed: self.seed,
            },
            clusters: ClusterParams {
                t_db: r.t_db,
                t_min: r.t_min,
                t_max: r.t_max,
                n_clusters: r.n_clusters,
                m_samples: r.m_samples,
            },
            localization: LocalizationParams {
                weights: EnergyWeights {
                    alpha: r.alpha,
                    beta: r.beta,
                    gamma: r.gamma,
                },
                inlier_threshold: self.t_inl,
                plane_eps: r.plane_eps,
                energy_reject: r.energy_reject,
                anchor_in_inlier_ratio: r.anchor_in_inlier_ratio,
                orientation: Orientation { up, right },
            },
            scale: self.registration.scale,
            refine: RefineParams {
                iterations: f.ransac_iters_refine,
                inlier_threshold: self.t_inl,
                correspondence_gate: f.corr_gate,
                min_correspondences: f.min_correspondences,
                sample_size: f.sample_size,
                rounds: f.rounds,
                seed: self.seed,
            },
        })
    }

    pub fn sampler(&self) -> Result<SceneSampler> {
        let s = &self.simulate;
        positive("simulate.distance_min", s.distance_min)?;
        if !(s.distance_max >= s.distance_min) {
            return Err(invalid("simulate.distance_max", "must not be below distance_min"));
        }
        for (k, v) in [
            ("simulate.max_tilt_deg", s.max_tilt_deg),
            ("simulate.max_roll_deg", s.max_roll_deg),
            ("simulate.max_offset", s.max_offset),
            ("simulate.extrinsic_rotation_deg", s.extrinsic_rotation_deg),
            ("simulate.optical_noise", s.optical_noise),
            ("simulate.radar_jitter", s.radar_jitter),
        ] {
            non_negative(k, v)?;
        }
        for v in s.extrinsic_translation {
            non_negative("simulate.extrinsic_translation", v)?;
        }
        for v in s.clutter_half_extent {
            positive("simulate.clutter_half_extent", v)?;
        }
        Ok(SceneSampler {
            distance: (s.distance_min, s.distance_max),
            max_tilt: s.max_tilt_deg.to_radians(),
            max_roll: s.max_roll_deg.to_radians(),
            max_offset: s.max_offset,
            extrinsic_rotation: s.extrinsic_rotation_deg.to_radians(),
            extrinsic_translation: s.extrinsic_translation.into(),
            optical_noise: s.optical_noise,
            radar_jitter: s.radar_jitter,
            clutter_count: s.clutter_count,
            clutter_half_extent: s.clutter_half_extent.into(),
            ..SceneSampler::default()
        })
    }

    pub fn camera(&self) -> Result<CameraModel> {
        let s = &self.simulate;
        if s.width == 0 || s.height == 0 || s.width > 1 << 14 || s.height > 1 << 14 {
            return Err(invalid("simulate", "width and height must lie in 1..=16384"));
        }
        let intrinsics = CameraIntrinsics::new(s.fx, s.fy, s.cx, s.cy).map_err(|e| invalid("simulate", e))?;
        Ok(CameraModel {
            intrinsics,
            width: s.width,
            height: s.height,
        })
    }
}

/// Applies `section.key=value`; the value is read as a TOML literal, or as
/// a string if it is not one.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| IoError::Config(format!("override {item:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(IoError::Config(format!("bad override key {key:?}")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for p in parents {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| IoError::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
