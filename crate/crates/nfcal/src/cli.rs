//! Command line: `simulate | calibrate | refine | evaluate | ablate`.
//!
//! Numeric parameters come from the TOML config (`--config` or
//! `CALIB_CONFIG`) and `--set section.key=value` overrides. Failures print a
//! JSON object on stderr and exit with a stage-specific code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nfcal_core::evaluation::{evaluate_alignment, residual_export};
use nfcal_core::pipeline::{
    calibrate, localize_optical, localize_radar, register_targets, CalibrationParams, Stage, StageError,
};
use nfcal_core::registration::refine_calibration;
use nfcal_core::{DepthCapture, RadarCloud, RigidTransform};
use serde::Serialize;

use crate::calibration::{load_calibration, save_calibration};
use crate::capture::load_capture;
use crate::config::Config;
use crate::error::{self, IoError};
use crate::ply::{format_ply, load_radar_cloud, scalar_cloud_vertices, PlyFormat};
use crate::report::{to_json, CalibrateJson, ExtrinsicErrorJson, MetricsJson, RefineJson};
use crate::scene::{list_scenes, write_scene, SceneDir};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_OPTICAL_DETECTION: i32 = 3;
pub const EXIT_RADAR_DETECTION: i32 = 4;
pub const EXIT_LOCALIZATION: i32 = 5;
pub const EXIT_REGISTRATION: i32 = 6;
pub const EXIT_IO: i32 = 7;

/// Residuals at or above this are drawn red in the residual PLY (m).
const RESIDUAL_COLOR_MAX: f64 = 0.005;

#[derive(Debug, Parser)]
#[command(
    name = "nfcal",
    version,
    about = "Near-field RGB-D / MIMO radar extrinsic calibration"
)]
pub struct Cli {
    /// TOML config file; every key is optional.
    #[arg(long, global = true, env = "CALIB_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set radar.t_db=10` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

/// Sensor inputs: either a scene directory or explicit paths.
#[derive(Debug, Args)]
pub struct Inputs {
    /// Scene directory written by `simulate`.
    #[arg(long, value_name = "DIR", conflicts_with_all = ["capture", "radar"], required_unless_present_all = ["capture", "radar"])]
    pub scene: Option<PathBuf>,
    /// Capture directory holding depth.f32, rgb.ppm and intrinsics.txt.
    #[arg(long, value_name = "DIR", requires = "radar")]
    pub capture: Option<PathBuf>,
    /// Radar point cloud (PLY with x, y, z, confidence).
    #[arg(long, value_name = "PATH", requires = "capture")]
    pub radar: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render seeded synthetic scenes with ground truth.
    Simulate {
        #[arg(long, short, value_name = "DIR")]
        output: PathBuf,
        /// Overrides `simulate.count`.
        #[arg(long)]
        count: Option<usize>,
        /// Overrides `simulate.seed`, the seed of the first scene.
        #[arg(long)]
        seed: Option<u64>,
        /// Write ASCII instead of binary PLY.
        #[arg(long)]
        ascii: bool,
    },
    /// Estimate the extrinsic from one capture of the sphere target.
    Calibrate {
        #[command(flatten)]
        inputs: Inputs,
        /// Calibration text file; a JSON mirror is written next to it.
        #[arg(long, short, value_name = "PATH")]
        output: PathBuf,
        /// Also write the JSON report (always printed on stdout).
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Refine a calibration with a capture of a flat plate.
    Refine {
        /// Initial calibration (text or .json).
        #[arg(long, value_name = "PATH")]
        calibration: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, short, value_name = "PATH")]
        output: PathBuf,
    },
    /// Align an object capture with a calibration and report residuals.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        calibration: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        /// Radar points with per-point residuals.
        #[arg(long, value_name = "PATH")]
        residuals: Option<PathBuf>,
        /// Metrics as JSON.
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Calibrate every scene with three radar energy configurations.
    Ablate {
        /// Directory of `scene_XXXX` directories.
        #[arg(long, value_name = "DIR")]
        scenes: PathBuf,
        /// Per-scene CSV; the summary goes to stdout.
        #[arg(long, short, value_name = "PATH")]
        output: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Stage(StageError),
    Io(IoError),
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        CliError::Stage(e)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Config(m) => CliError::Usage(m),
            IoError::Core(nfcal_core::Error::Scene(m)) => CliError::Usage(m),
            e => CliError::Io(e),
        }
    }
}

pub fn stage_exit_code(stage: Stage) -> i32 {
    match stage {
        Stage::OpticalDetection => EXIT_OPTICAL_DETECTION,
        Stage::RadarDetection => EXIT_RADAR_DETECTION,
        Stage::OpticalLocalization | Stage::RadarLocalization => EXIT_LOCALIZATION,
        Stage::Registration | Stage::Refinement => EXIT_REGISTRATION,
    }
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<&'a str>,
    message: String,
    exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Stage(e) => stage_exit_code(e.stage),
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn to_json(&self) -> String {
        let (error, stage, message) = match self {
            CliError::Usage(m) => ("usage", None, m.clone()),
            CliError::Stage(e) => ("stage", Some(e.stage.name()), e.error.to_string()),
            CliError::Io(e) => ("io", None, e.to_string()),
        };
        let j = ErrorJson {
            error,
            stage,
            message,
            exit_code: self.exit_code(),
        };
        serde_json::to_string(&j).expect("plain data serializes")
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim_end().to_string());
            let _ = writeln!(stderr, "{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let _ = writeln!(stderr, "{}", err.to_json());
            err.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    let params = config.params()?;
    match &cli.command {
        Command::Simulate {
            output,
            count,
            seed,
            ascii,
        } => simulate(&config, output, *count, *seed, *ascii, out),
        Command::Calibrate { inputs, output, report } => cmd_calibrate(&params, inputs, output, report.as_deref(), out),
        Command::Refine {
            calibration,
            inputs,
            output,
        } => cmd_refine(&params, calibration, inputs, output, out),
        Command::Evaluate {
            calibration,
            inputs,
            residuals,
            json,
        } => cmd_evaluate(calibration, inputs, residuals.as_deref(), json.as_deref(), out),
        Command::Ablate { scenes, output } => cmd_ablate(&params, scenes, output, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(IoError::io("<stdout>", e)))
}

/// Which capture of a scene directory a command reads.
#[derive(Clone, Copy)]
enum ScenePart {
    Target,
    Plate,
    Disk,
}

fn load_inputs(inputs: &Inputs, part: ScenePart) -> CliResult<(DepthCapture, RadarCloud)> {
    let (capture, radar) = match (&inputs.scene, &inputs.capture, &inputs.radar) {
        (Some(scene), _, _) => {
            let s = SceneDir::new(scene);
            match part {
                ScenePart::Target => (s.target(), s.radar()),
                ScenePart::Plate => (s.plate(), s.plate_radar()),
                ScenePart::Disk => (s.disk(), s.disk_radar()),
            }
        }
        (None, Some(c), Some(r)) => (c.clone(), r.clone()),
        _ => return Err(CliError::Usage("give --scene, or both --capture and --radar".into())),
    };
    Ok((load_capture(&capture)?, load_radar_cloud(&radar)?))
}

fn simulate(
    config: &Config,
    output: &Path,
    count: Option<usize>,
    seed: Option<u64>,
    ascii: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let sampler = config.sampler()?;
    let camera = config.camera()?;
    let geometry = config.geometry()?;
    let format = if ascii {
        PlyFormat::Ascii
    } else {
        PlyFormat::BinaryLittleEndian
    };
    let first = seed.unwrap_or(config.simulate.seed);
    for k in 0..count.unwrap_or(config.simulate.count) {
        let seed = first
            .checked_add(k as u64)
            .ok_or_else(|| CliError::Usage("scene seed overflows u64".into()))?;
        let dir = SceneDir::numbered(output, seed);
        write_scene(&dir, &sampler.sample(seed), &geometry, &camera, format)?;
        emit(out, &format!("{}\n", dir.root.display()))?;
    }
    Ok(())
}

fn ground_truth_of(inputs: &Inputs) -> CliResult<Option<RigidTransform>> {
    let Some(scene) = &inputs.scene else {
        return Ok(None);
    };
    let dir = SceneDir::new(scene);
    if !dir.ground_truth().exists() {
        return Ok(None);
    }
    Ok(Some(dir.load_ground_truth()?.extrinsic()?))
}

fn cmd_calibrate(
    params: &CalibrationParams,
    inputs: &Inputs,
    output: &Path,
    report_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let truth = ground_truth_of(inputs)?;
    let (capture, cloud) = load_inputs(inputs, ScenePart::Target)?;
    let report = calibrate(&capture, &cloud, params)?;
    let mut json = CalibrateJson::from(&report);
    json.ground_truth_error = truth.map(|t| ExtrinsicErrorJson::between(report.calibration.transform(), &t));
    let text = to_json(&json);
    save_calibration(output, &report.calibration)?;
    if let Some(path) = report_path {
        error::write(path, text.as_bytes())?;
    }
    emit(out, &text)
}

fn cmd_refine(
    params: &CalibrationParams,
    calibration: &Path,
    inputs: &Inputs,
    output: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let initial = load_calibration(calibration)?;
    let (capture, cloud) = load_inputs(inputs, ScenePart::Plate)?;
    let refinement = refine_calibration(&initial, &capture, &cloud, &params.refine).map_err(|error| StageError {
        stage: Stage::Refinement,
        error,
    })?;
    save_calibration(output, &refinement.calibration)?;
    emit(out, &to_json(&RefineJson::from(&refinement)))
}

fn cmd_evaluate(
    calibration: &Path,
    inputs: &Inputs,
    residuals: Option<&Path>,
    json: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let calib = load_calibration(calibration)?;
    let (capture, cloud) = load_inputs(inputs, ScenePart::Disk)?;
    let optical = capture.to_points();
    let t = calib.transform();
    let metrics = evaluate_alignment(&optical, cloud.points(), t).map_err(IoError::from)?;
    let metrics = MetricsJson::new(&metrics, optical.len(), cloud.len());
    if let Some(path) = residuals {
        let r = residual_export(&optical, cloud.points(), t).map_err(IoError::from)?;
        let ply = format_ply(&scalar_cloud_vertices(
            &r.points,
            "residual",
            &r.residuals,
            RESIDUAL_COLOR_MAX,
        ));
        error::write(path, &ply)?;
    }
    if let Some(path) = json {
        error::write(path, to_json(&metrics).as_bytes())?;
    }
    emit(out, &metrics.table())
}

pub const ABLATION_VARIANTS: [&str; 3] = ["data", "data+sphere", "full"];

/// Radar localization parameters of the three ablation variants: the data
/// term alone, plus the sphere term, and the configured full energy.
pub fn ablation_params(base: &CalibrationParams) -> [CalibrationParams; 3] {
    let mut data = base.clone();
    data.localization.weights.alpha = 0.0;
    data.localization.weights.beta = 0.0;
    data.localization.weights.gamma = 0.0;
    data.localization.anchor_in_inlier_ratio = false;
    let mut sphere = base.clone();
    sphere.localization.weights.beta = 0.0;
    sphere.localization.weights.gamma = 0.0;
    sphere.localization.anchor_in_inlier_ratio = false;
    [data, sphere, base.clone()]
}

/// One ablation row; `None` errors mean the variant failed.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub scene: String,
    pub variant: &'static str,
    pub status: String,
    pub error: Option<ExtrinsicErrorJson>,
    pub energy: Option<f64>,
}

pub fn ablate_scene(scene: &SceneDir, base: &CalibrationParams) -> Result<[AblationRow; 3], IoError> {
    let truth = scene.load_ground_truth()?.extrinsic()?;
    let capture = load_capture(&scene.target())?;
    let cloud = load_radar_cloud(&scene.radar())?;
    let name = scene
        .root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let optical = localize_optical(&capture, base);
    let variants = ablation_params(base);
    Ok([0, 1, 2].map(|k| {
        let result = optical.as_ref().map_err(Clone::clone).and_then(|optical| {
            let radar = localize_radar(&cloud, &variants[k])?;
            let (calib, _) = register_targets(&optical.target.centers, &radar.target.corners, variants[k].scale)?;
            Ok((calib, radar.target.energy.total))
        });
        match result {
            Ok((calib, energy)) => AblationRow {
                scene: name.clone(),
                variant: ABLATION_VARIANTS[k],
                status: "ok".into(),
                error: Some(ExtrinsicErrorJson::between(calib.transform(), &truth)),
                energy: Some(energy),
            },
            Err(e) => AblationRow {
                scene: name.clone(),
                variant: ABLATION_VARIANTS[k],
                status: e.stage.name().into(),
                error: None,
                energy: None,
            },
        }
    }))
}

fn field(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("scene,variant,status,translation_error_m,rotation_error_deg,energy\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.scene,
            r.variant,
            r.status,
            field(r.error.map(|e| e.translation_m)),
            field(r.error.map(|e| e.rotation_deg)),
            field(r.energy)
        );
    }
    s
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Medians count failed scenes as infinite error; means cover successful
/// scenes only.
pub fn ablation_summary(rows: &[AblationRow]) -> String {
    let mut s = String::from(
        "variant,scenes,failures,median_translation_error_m,mean_translation_error_m,median_rotation_error_deg,mean_rotation_error_deg\n",
    );
    for variant in ABLATION_VARIANTS {
        let rows: Vec<&AblationRow> = rows.iter().filter(|r| r.variant == variant).collect();
        let ok: Vec<ExtrinsicErrorJson> = rows.iter().filter_map(|r| r.error).collect();
        let with_failures = |f: fn(&ExtrinsicErrorJson) -> f64| {
            rows.iter()
                .map(|r| r.error.as_ref().map_or(f64::INFINITY, f))
                .collect::<Vec<f64>>()
        };
        let t: Vec<f64> = ok.iter().map(|e| e.translation_m).collect();
        let r: Vec<f64> = ok.iter().map(|e| e.rotation_deg).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            variant,
            rows.len(),
            rows.len() - ok.len(),
            median(with_failures(|e| e.translation_m)),
            mean(&t),
            median(with_failures(|e| e.rotation_deg)),
            mean(&r)
        );
    }
    s
}

fn cmd_ablate(params: &CalibrationParams, scenes: &Path, output: &Path, out: &mut dyn Write) -> CliResult<()> {
    if !scenes.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", scenes.display())));
    }
    let dirs = list_scenes(scenes)?;
    if dirs.is_empty() {
        return Err(CliError::Usage(format!(
            "no scene_* directories in {}",
            scenes.display()
        )));
    }
    let mut rows = Vec::with_capacity(3 * dirs.len());
    for dir in &dirs {
        rows.extend(ablate_scene(dir, params)?);
    }
    error::write(output, ablation_csv(&rows).as_bytes())?;
    emit(out, &ablation_summary(&rows))
}
