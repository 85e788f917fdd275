//! On-disk layout of simulated scenes:
//!
//! ```text
//! scene_0007/
//!   target/           depth.f32, rgb.ppm, intrinsics.txt of the sphere target
//!   radar.ply         radar cloud of the sphere target
//!   plate/, plate.ply refinement plate at the same pose
//!   disk/, disk.ply   evaluation disk at the same pose
//!   ground_truth.json
//! ```

use std::path::{Path, PathBuf};

use nfcal_core::synthetic::{
    render_depth_capture, render_eval_object, render_plate, render_radar_cloud, CameraModel, EvalObject, SceneSpec,
};
use nfcal_core::TargetGeometry;

use crate::capture::save_capture;
use crate::error::{self, IoError, Result};
use crate::ply::{save_radar_cloud, PlyFormat};
use crate::report::{to_json, GroundTruthJson};

pub const SCENE_PREFIX: &str = "scene_";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneDir {
    pub root: PathBuf,
}

impl SceneDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `scene_XXXX` under `parent`.
    pub fn numbered(parent: &Path, seed: u64) -> Self {
        Self::new(parent.join(format!("{SCENE_PREFIX}{seed:04}")))
    }

    pub fn target(&self) -> PathBuf {
        self.root.join("target")
    }

    pub fn radar(&self) -> PathBuf {
        self.root.join("radar.ply")
    }

    pub fn plate(&self) -> PathBuf {
        self.root.join("plate")
    }

    pub fn plate_radar(&self) -> PathBuf {
        self.root.join("plate.ply")
    }

    pub fn disk(&self) -> PathBuf {
        self.root.join("disk")
    }

    pub fn disk_radar(&self) -> PathBuf {
        self.root.join("disk.ply")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.root.join("ground_truth.json")
    }

    pub fn load_ground_truth(&self) -> Result<GroundTruthJson> {
        let path = self.ground_truth();
        let bytes = error::read(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| IoError::malformed("ground truth", e.to_string()))
    }
}

/// Renders and writes one scene.
pub fn write_scene(
    dir: &SceneDir,
    spec: &SceneSpec,
    geometry: &TargetGeometry,
    camera: &CameraModel,
    format: PlyFormat,
) -> Result<()> {
    save_capture(&dir.target(), &render_depth_capture(spec, geometry, camera)?)?;
    save_radar_cloud(&dir.radar(), &render_radar_cloud(spec, geometry)?, format)?;
    let (capture, cloud) = render_plate(spec, camera)?;
    save_capture(&dir.plate(), &capture)?;
    save_radar_cloud(&dir.plate_radar(), &cloud, format)?;
    let (capture, cloud) = render_eval_object(spec, EvalObject::Disk, camera)?;
    save_capture(&dir.disk(), &capture)?;
    save_radar_cloud(&dir.disk_radar(), &cloud, format)?;
    let truth = GroundTruthJson::new(spec.seed, &spec.ground_truth(geometry), &spec.target_pose);
    error::write(&dir.ground_truth(), to_json(&truth).as_bytes())
}

/// Scene directories directly under `parent`, sorted by name.
pub fn list_scenes(parent: &Path) -> Result<Vec<SceneDir>> {
    let entries = std::fs::read_dir(parent).map_err(|e| IoError::io(parent, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| IoError::io(parent, e))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with(SCENE_PREFIX) && entry.path().is_dir() {
            out.push(SceneDir::new(entry.path()));
        }
    }
    out.sort_by(|a, b| a.root.cmp(&b.root));
    Ok(out)
}
