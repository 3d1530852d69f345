//! Pipeline configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use splatinsert::camera::{ArcSide, Intrinsics, TrajectorySpec, DEFAULT_ELEVATION_DEGREES};
use splatinsert::mask::MaskMode;
use splatinsert::recon::TrainConfig;

use crate::CliError;

pub const MOCK_ENDPOINT: &str = "mock";

/// Orbit and image settings shared by both editing arcs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub n_views: usize,
    pub arc_degrees: f64,
    pub radius: Option<f64>,
    pub elevation_degrees: f64,
    pub reference_azimuth_degrees: f64,
    pub width: usize,
    pub height: usize,
    pub fov_degrees: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            n_views: 14,
            arc_degrees: 120.0,
            radius: None,
            elevation_degrees: DEFAULT_ELEVATION_DEGREES,
            reference_azimuth_degrees: 0.0,
            width: 512,
            height: 512,
            fov_degrees: 60.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn spec(&self, side: ArcSide) -> TrajectorySpec {
        TrajectorySpec {
            n_views: self.n_views,
            arc_degrees: self.arc_degrees,
            radius: self.radius,
            elevation_degrees: self.elevation_degrees,
            side,
            reference_azimuth_degrees: self.reference_azimuth_degrees,
            intrinsics: Intrinsics::from_fov(self.width, self.height, self.fov_degrees),
        }
    }
}

/// Base training schedule that `[train]` keys are laid over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// 30000 iterations with the standard learning rates and densification.
    #[default]
    Default,
    /// 3000 iterations for small synthetic scenes.
    Toy,
}

impl Schedule {
    fn base(self) -> TrainConfig {
        match self {
            Schedule::Default => TrainConfig::default(),
            Schedule::Toy => TrainConfig::toy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Pretrained scene (PLY).
    pub scene: PathBuf,
    /// Editing box (JSON).
    pub bbox: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub prompt: String,
    #[serde(default)]
    pub seed: u64,
    /// Base URL of an inpainting service, or `"mock"`.
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default)]
    pub background: [f64; 3],
    #[serde(default)]
    pub mask_mode: MaskMode,
    /// Gaussians in the coarse geometric prior seeded inside the box.
    #[serde(default = "default_coarse")]
    pub coarse_gaussians: usize,
    /// Original training cameras (JSON array of camera records). A record's
    /// optional `image` is its capture; without one the original scene is
    /// rendered instead.
    #[serde(default)]
    pub training_cameras: Option<PathBuf>,
    /// Write a resumable checkpoint every this many iterations.
    #[serde(default)]
    pub checkpoint_interval: Option<usize>,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub schedule: Schedule,
    /// Training settings, resolved against `schedule`.
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_endpoint() -> String {
    MOCK_ENDPOINT.into()
}

fn default_coarse() -> usize {
    200
}

/// Values given on the command line take precedence over the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Object description sent to the inpainter.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Seed for the prior, the inpainter and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inpainting service base URL, or "mock".
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Views per arc [default: 14].
    #[arg(long)]
    pub n_views: Option<usize>,
    /// Arc length in degrees [default: 120].
    #[arg(long)]
    pub arc_degrees: Option<f64>,
    /// Fine-tuning iterations [default: 30000].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// SSIM weight in the loss [default: 0.2].
    #[arg(long)]
    pub lambda_ssim: Option<f64>,
}

/// Lays the keys of a `[train]` table over the schedule's settings. JSON is
/// the merge medium because it can express unset options, which TOML cannot.
fn resolve_train(schedule: Schedule, train: Option<toml::Value>) -> Result<TrainConfig, serde_json::Error> {
    let mut merged = serde_json::to_value(schedule.base())?;
    if let (Some(base), Some(overlay)) = (merged.as_object_mut(), train) {
        if let serde_json::Value::Object(keys) = serde_json::to_value(overlay)? {
            base.extend(keys);
        }
    }
    serde_json::from_value(merged)
}

impl PipelineConfig {
    /// Reads a TOML file; relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| bad(&e))?;
        let train = table.remove("train");
        let mut config: PipelineConfig = table.try_into().map_err(|e| bad(&e))?;
        config.train = resolve_train(config.schedule, train).map_err(|e| bad(&e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.scene);
        resolve(&mut config.bbox);
        resolve(&mut config.output);
        if let Some(p) = config.training_cameras.as_mut() {
            resolve(p);
        }
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.output {
            self.output = v.clone();
        }
        if let Some(v) = &o.prompt {
            self.prompt = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
            self.train.seed = v;
        }
        if let Some(v) = &o.endpoint {
            self.endpoint = v.clone();
        }
        if let Some(v) = o.n_views {
            self.trajectory.n_views = v;
        }
        if let Some(v) = o.arc_degrees {
            self.trajectory.arc_degrees = v;
        }
        if let Some(v) = o.iterations {
            self.train.iterations = v;
        }
        if let Some(v) = o.lambda_ssim {
            self.train.lambda_ssim = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (what, p) in [("scene", &self.scene), ("bbox", &self.bbox)] {
            if !p.is_file() {
                return Err(CliError::Config(format!("{what} file {} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.training_cameras {
            if !p.is_file() {
                return Err(CliError::Config(format!("training cameras file {} does not exist", p.display())));
            }
        }
        if self.endpoint != MOCK_ENDPOINT && !self.endpoint.starts_with("http://") && !self.endpoint.starts_with("https://") {
            return Err(CliError::Config(format!(
                "endpoint must be \"mock\" or an http(s) URL, got {:?}",
                self.endpoint
            )));
        }
        if self.coarse_gaussians == 0 || self.checkpoint_interval == Some(0) {
            return Err(CliError::Config("coarse_gaussians and checkpoint_interval must be at least 1".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(CliError::Config("background components must lie in [0, 1]".into()));
        }
        self.trajectory.spec(ArcSide::Left).validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys), ignoring the output
    /// directory so that the same run in two places hashes equally.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn bundles_dir(&self) -> PathBuf {
        self.output.join("bundles")
    }

    pub fn inpainted_dir(&self) -> PathBuf {
        self.output.join("inpainted")
    }

    pub fn reconstruct_dir(&self) -> PathBuf {
        self.output.join("reconstruct")
    }

    pub fn evaluate_dir(&self) -> PathBuf {
        self.output.join("evaluate")
    }
}
