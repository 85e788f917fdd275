//! Calibration files: a keyword-per-line text format and a JSON mirror.
//!
//! ```text
//! # optical -> radar: p_radar = R * (scale * p_optical) + t
//! rotation r00 r01 r02 r10 r11 r12 r20 r21 r22
//! translation tx ty tz
//! scale s
//! residual_rmse e
//! residuals e1 e2 ...
//! ```
//!
//! Numbers are written in shortest round-trip form, so save then load is
//! bit-exact. Loading re-validates every invariant.

use std::path::Path;

use nfcal_core::registration::RigidCalibration;
use nfcal_core::{Matrix3, RigidTransform, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{self, IoError, Result};

const F: &str = "calibration";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn format_calibration(calib: &RigidCalibration) -> String {
    let t = calib.transform();
    let r = t.rotation();
    let rows: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])).collect();
    format!(
        "# optical -> radar: p_radar = R * (scale * p_optical) + t\nrotation {}\ntranslation {}\nscale {:?}\nresidual_rmse {:?}\nresiduals {}\n",
        join(&rows),
        join(t.translation().as_slice()),
        t.scale(),
        calib.residual_rmse(),
        join(calib.per_point_residuals()),
    )
}

pub fn parse_calibration(text: &str) -> Result<RigidCalibration> {
    let mut rotation = None;
    let mut translation = None;
    let mut scale = None;
    let mut rmse = None;
    let mut residuals = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut words = line.split_whitespace();
        let key = words.next().unwrap_or_default();
        let values: Vec<f64> = words
            .map(|w| {
                w.parse()
                    .map_err(|_| IoError::malformed(F, format!("{key}: bad number {w:?}")))
            })
            .collect::<Result<_>>()?;
        let slot = match key {
            "rotation" => &mut rotation,
            "translation" => &mut translation,
            "scale" => &mut scale,
            "residual_rmse" => &mut rmse,
            "residuals" => &mut residuals,
            other => return Err(IoError::malformed(F, format!("unknown key {other:?}"))),
        };
        if slot.replace(values).is_some() {
            return Err(IoError::malformed(F, format!("duplicate key {key:?}")));
        }
    }
    let take = |v: Option<Vec<f64>>, key: &str, len: Option<usize>| -> Result<Vec<f64>> {
        let v = v.ok_or_else(|| IoError::malformed(F, format!("missing {key}")))?;
        if len.is_some_and(|n| n != v.len()) {
            return Err(IoError::malformed(
                F,
                format!("{key} needs {} values, found {}", len.unwrap_or(0), v.len()),
            ));
        }
        Ok(v)
    };
    let r = take(rotation, "rotation", Some(9))?;
    let t = take(translation, "translation", Some(3))?;
    let s = take(scale, "scale", Some(1))?;
    let e = take(rmse, "residual_rmse", Some(1))?;
    let residuals = take(residuals, "residuals", None)?;
    build(
        Matrix3::from_row_slice(&r),
        Vector3::new(t[0], t[1], t[2]),
        s[0],
        e[0],
        residuals,
    )
}

fn build(r: Matrix3, t: Vector3, scale: f64, rmse: f64, residuals: Vec<f64>) -> Result<RigidCalibration> {
    let transform = RigidTransform::new(r, t, scale)?;
    Ok(RigidCalibration::from_parts(transform, rmse, residuals)?)
}

/// JSON mirror of the text format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationJson {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
    pub residual_rmse: f64,
    pub per_point_residuals: Vec<f64>,
}

impl From<&RigidCalibration> for CalibrationJson {
    fn from(calib: &RigidCalibration) -> Self {
        let t = calib.transform();
        let r = t.rotation();
        Self {
            rotation: [0, 1, 2].map(|i| [0, 1, 2].map(|j| r[(i, j)])),
            translation: [t.translation().x, t.translation().y, t.translation().z],
            scale: t.scale(),
            residual_rmse: calib.residual_rmse(),
            per_point_residuals: calib.per_point_residuals().to_vec(),
        }
    }
}

impl TryFrom<CalibrationJson> for RigidCalibration {
    type Error = IoError;

    fn try_from(j: CalibrationJson) -> Result<Self> {
        let r = Matrix3::from_fn(|i, k| j.rotation[i][k]);
        let [x, y, z] = j.translation;
        build(
            r,
            Vector3::new(x, y, z),
            j.scale,
            j.residual_rmse,
            j.per_point_residuals,
        )
    }
}

pub fn format_calibration_json(calib: &RigidCalibration) -> String {
    let mut s = serde_json::to_string_pretty(&CalibrationJson::from(calib)).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn parse_calibration_json(text: &str) -> Result<RigidCalibration> {
    let j: CalibrationJson = serde_json::from_str(text).map_err(|e| IoError::malformed(F, e.to_string()))?;
    j.try_into()
}

/// JSON mirror path next to a text calibration file.
pub fn json_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Writes the text file and its JSON mirror.
pub fn save_calibration(path: &Path, calib: &RigidCalibration) -> Result<()> {
    error::write(path, format_calibration(calib).as_bytes())?;
    error::write(&json_path(path), format_calibration_json(calib).as_bytes())
}

/// Loads the text form, or the JSON form for a `.json` path.
pub fn load_calibration(path: &Path) -> Result<RigidCalibration> {
    let bytes = error::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| IoError::malformed(F, "not UTF-8"))?;
    if path.extension().is_some_and(|e| e == "json") {
        parse_calibration_json(&text)
    } else {
        parse_calibration(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_calibration(rng: &mut ChaCha8Rng) -> RigidCalibration {
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
        let transform = RigidTransform::from_axis_angle(axis, rng.random_range(-3.0..3.0), t)
            .with_scale(rng.random_range(0.5..2.0))
            .unwrap();
        let residuals = (0..4).map(|_| rng.random_range(0.0..0.003)).collect();
        RigidCalibration::new(transform, residuals).unwrap()
    }

    #[test]
    fn identity_round_trip() {
        let c = RigidCalibration::new(RigidTransform::identity(), vec![0.0; 4]).unwrap();
        assert_eq!(parse_calibration(&format_calibration(&c)).unwrap(), c);
        assert_eq!(parse_calibration_json(&format_calibration_json(&c)).unwrap(), c);
    }

    #[test]
    fn random_round_trips_are_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let c = random_calibration(&mut rng);
            assert_eq!(parse_calibration(&format_calibration(&c)).unwrap(), c);
            assert_eq!(parse_calibration_json(&format_calibration_json(&c)).unwrap(), c);
        }
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = random_calibration(&mut ChaCha8Rng::seed_from_u64(1));
        let path = dir.path().join("calib.txt");
        save_calibration(&path, &c).unwrap();
        assert_eq!(load_calibration(&path).unwrap(), c);
        assert_eq!(load_calibration(&json_path(&path)).unwrap(), c);
    }

    #[test]
    fn non_orthonormal_rotation_is_a_validation_error() {
        let text = "rotation 1 0 0 0 1 0 0 0 1.01\ntranslation 0 0 0\nscale 1\nresidual_rmse 0\nresiduals 0 0 0 0\n";
        assert!(matches!(
            parse_calibration(text),
            Err(IoError::Core(nfcal_core::Error::Validation { .. }))
        ));
    }

    #[test]
    fn inconsistent_rmse_is_rejected() {
        let text = "rotation 1 0 0 0 1 0 0 0 1\ntranslation 0 0 0\nscale 1\nresidual_rmse 0.5\nresiduals 0 0 0 0\n";
        assert!(parse_calibration(text).is_err());
    }

    #[test]
    fn missing_and_duplicate_keys_are_malformed() {
        assert!(matches!(parse_calibration("scale 1\n"), Err(IoError::Malformed { .. })));
        assert!(matches!(
            parse_calibration("scale 1\nscale 1\n"),
            Err(IoError::Malformed { .. })
        ));
    }
}
