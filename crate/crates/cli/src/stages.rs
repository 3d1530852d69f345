//! One function per subcommand. Every stage reads its inputs from disk and
//! writes its artifacts under the configured output directory.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use splatinsert::camera::{load_camera_records, make_trajectory, ArcSide, Camera};
use splatinsert::imageio::{load_png, save_contact_sheet, save_png8};
use splatinsert::mask::project_bbox_mask_with;
use splatinsert::metrics::{background_fidelity_eval, consistency_eval, EvalReport};
use splatinsert::pipeline::{
    conditioning_image, extract_view_bundles, inpaint, load_bundles, save_bundles, seed_coarse_prior, Endpoint,
    ExtractOptions, HttpInpainter, InpaintRequest, MockInpainter, ViewBundle,
};
use splatinsert::ply::{load_ply, save_ply};
use splatinsert::recon::{EditedView, LogRecord, SupervisionSet, Trainer, TrainingView};
use splatinsert::scene::sample_point_cloud;
use splatinsert::{render_fast, Error, GaussianScene, Image, OrientedBBox};

use crate::config::{PipelineConfig, MOCK_ENDPOINT};
use crate::CliError;

pub const ARCS: [(&str, ArcSide); 2] = [("left", ArcSide::Left), ("right", ArcSide::Right)];
pub const COARSE_FILE: &str = "coarse.ply";
pub const INPAINT_MANIFEST: &str = "manifest.json";
pub const EDITED_FILE: &str = "edited.ply";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::IoAt { path: dir.into(), source: e })?;
    }
    fs::write(path, bytes).map_err(|e| Error::IoAt { path: path.into(), source: e })?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| Error::IoAt { path: path.into(), source: e })?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

/// Exports Gaussian centers and colors for the box-placement UI.
pub fn sample_pointcloud(scene: &Path, out: &Path, max_points: usize) -> Result<usize, CliError> {
    let scene = load_ply(scene)?;
    let sample = sample_point_cloud(&scene, max_points);
    write(out, sample.to_json()?)?;
    Ok(sample.len())
}

/// Trajectory cameras of both arcs, left first.
pub fn trajectory_cameras(config: &PipelineConfig, bbox: &OrientedBBox) -> Result<Vec<(String, Vec<Camera>)>, CliError> {
    ARCS.iter()
        .map(|(name, side)| Ok((name.to_string(), make_trajectory(bbox, &config.trajectory.spec(*side))?)))
        .collect()
}

pub fn extract(config: &PipelineConfig) -> Result<usize, CliError> {
    let scene = load_ply(&config.scene)?;
    let bbox = OrientedBBox::load(&config.bbox)?;
    let coarse = seed_coarse_prior(&bbox, config.coarse_gaussians, config.seed)?;
    let arcs = trajectory_cameras(config, &bbox)?;
    let cameras: Vec<Camera> = arcs.iter().flat_map(|(_, c)| c.iter().cloned()).collect();
    let options = ExtractOptions {
        background: config.background,
        mask_mode: config.mask_mode,
    };
    let mut bundles = extract_view_bundles(&scene, &coarse, &bbox, &cameras, &options)?.into_iter();
    let groups: Vec<(String, Vec<ViewBundle>)> = arcs
        .iter()
        .map(|(name, cams)| (name.clone(), bundles.by_ref().take(cams.len()).collect()))
        .collect();
    let dir = config.bundles_dir();
    save_bundles(&dir, &groups, Some(&config.hash()))?;
    save_ply(&coarse, dir.join(COARSE_FILE))?;
    Ok(cameras.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintGroup {
    pub name: String,
    pub images: Vec<String>,
    pub conditioning: String,
}

/// Index of the inpainted set written by [`inpaint_stage`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintManifest {
    pub config_hash: String,
    pub endpoint: String,
    pub prompt: String,
    pub seed: u64,
    pub groups: Vec<InpaintGroup>,
}

fn endpoint(config: &PipelineConfig) -> Result<Endpoint, CliError> {
    if config.endpoint == MOCK_ENDPOINT {
        let bbox = OrientedBBox::load(&config.bbox)?;
        let scene = load_ply(&config.scene)?;
        Ok(Endpoint::Mock(MockInpainter::new(bbox).with_scene(scene, config.background)))
    } else {
        Ok(Endpoint::Http(HttpInpainter::new(config.endpoint.clone())))
    }
}

/// Sends each arc's bundles as one request and stores the returned views.
pub fn inpaint_stage(config: &PipelineConfig) -> Result<usize, CliError> {
    let (_, groups) = load_bundles(config.bundles_dir())?;
    let endpoint = endpoint(config)?;
    let dir = config.inpainted_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::IoAt { path: dir.clone(), source: e })?;
    let mut manifest = InpaintManifest {
        config_hash: config.hash(),
        endpoint: config.endpoint.clone(),
        prompt: config.prompt.clone(),
        seed: config.seed,
        groups: Vec::new(),
    };
    let mut count = 0;
    for (name, bundles) in groups {
        let request = InpaintRequest::new(bundles, config.prompt.clone(), config.seed)?;
        let response = inpaint(&request, &endpoint)?;
        let mut images = Vec::new();
        for (i, img) in response.images.iter().enumerate() {
            let file = format!("{name}_{i:02}.png");
            save_png8(img, dir.join(&file))?;
            images.push(file);
        }
        let conditioning = format!("{name}_conditioning.png");
        save_png8(conditioning_image(&request.bundles, &response)?, dir.join(&conditioning))?;
        count += images.len();
        manifest.groups.push(InpaintGroup {
            name,
            images,
            conditioning,
        });
    }
    write(&dir.join(INPAINT_MANIFEST), serde_json::to_string_pretty(&manifest).map_err(Error::from)?)?;
    Ok(count)
}

/// Edited views (bundle cameras paired with inpainted images) and the
/// bundles they came from, in manifest order.
fn edited_views(config: &PipelineConfig) -> Result<(Vec<EditedView>, Vec<ViewBundle>), CliError> {
    let (_, groups) = load_bundles(config.bundles_dir())?;
    let dir = config.inpainted_dir();
    let manifest: InpaintManifest = read_json(&dir.join(INPAINT_MANIFEST))?;
    if manifest.groups.len() != groups.len() {
        return Err(Error::Format("inpainted set does not match the bundles; rerun inpaint".into()).into());
    }
    let mut views = Vec::new();
    let mut all = Vec::new();
    for ((name, bundles), g) in groups.into_iter().zip(&manifest.groups) {
        if g.name != name || g.images.len() != bundles.len() {
            return Err(Error::Format(format!("inpainted group {:?} does not match the bundles; rerun inpaint", g.name)).into());
        }
        for (b, file) in bundles.into_iter().zip(&g.images) {
            let image = load_png(dir.join(file))?;
            views.push(EditedView {
                camera: b.camera.clone(),
                image,
            });
            all.push(b);
        }
    }
    Ok((views, all))
}

/// Original views with their editing masks. Missing captures are replaced
/// by renders of the original scene.
fn training_views(config: &PipelineConfig, original: &GaussianScene, bbox: &OrientedBBox) -> Result<Vec<TrainingView>, CliError> {
    let Some(path) = &config.training_cameras else {
        return Ok(Vec::new());
    };
    let base = path.parent().unwrap_or(Path::new("."));
    load_camera_records(path)?
        .iter()
        .map(|r| {
            let camera = Camera::try_from(r)?;
            let image = match &r.image {
                Some(file) => load_png(base.join(file))?,
                None => render_fast(original, &camera, config.background)?.color,
            };
            let mask = project_bbox_mask_with(bbox, &camera, config.mask_mode);
            Ok(TrainingView { camera, image, mask })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructSummary {
    pub config_hash: String,
    pub iterations: usize,
    pub initial_gaussians: usize,
    pub gaussians: usize,
    pub edited_views: usize,
    pub training_views: usize,
}

/// Log lines from an earlier run up to and including `iteration`.
fn log_prefix(path: &Path, iteration: usize) -> Result<String, CliError> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(String::new());
    };
    let mut out = String::new();
    for line in text.lines() {
        let rec: LogRecord = serde_json::from_str(line).map_err(Error::from)?;
        if rec.iter <= iteration {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

/// Fine-tunes `original ∪ coarse prior`, optionally continuing from a
/// checkpoint written by an earlier run.
pub fn reconstruct(config: &PipelineConfig, resume: Option<&Path>) -> Result<ReconstructSummary, CliError> {
    let original = load_ply(&config.scene)?;
    let bbox = OrientedBBox::load(&config.bbox)?;
    let coarse = load_ply(config.bundles_dir().join(COARSE_FILE))?;
    let (edited, _) = edited_views(config)?;
    let supervision = SupervisionSet {
        edited_views: edited,
        training_views: training_views(config, &original, &bbox)?,
    };
    let initial = original.merged(&coarse);
    let initial_gaussians = initial.len();
    let dir = config.reconstruct_dir();
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(ckpt, &supervision, config.train.clone())?,
        None => Trainer::new(initial, &supervision, config.train.clone())?,
    };
    let log_path = dir.join(LOG_FILE);
    let prefix = match resume {
        Some(_) => log_prefix(&log_path, trainer.iteration())?,
        None => String::new(),
    };
    write(&log_path, prefix)?;
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::IoAt { path: log_path.clone(), source: e })?;
    let mut sink = |rec: &LogRecord| -> splatinsert::Result<()> {
        writeln!(log, "{}", serde_json::to_string(rec)?)?;
        Ok(())
    };
    let interval = config.checkpoint_interval.unwrap_or(usize::MAX);
    let checkpoints = dir.join("checkpoints");
    let result = (|| -> Result<(), CliError> {
        while !trainer.is_done() {
            let next = (trainer.iteration() / interval + 1).saturating_mul(interval);
            trainer.run_until(next, &mut sink)?;
            if trainer.iteration() == next {
                fs::create_dir_all(&checkpoints).map_err(|e| Error::IoAt { path: checkpoints.clone(), source: e })?;
                trainer.save_checkpoint(checkpoints.join(format!("iter_{next:06}.ply")))?;
            }
        }
        Ok(())
    })();
    if let Err(CliError::Core(Error::Divergence { checkpoint, .. })) = &result {
        save_ply(checkpoint, dir.join("diverged.ply"))?;
    }
    result?;
    let scene = trainer.into_scene();
    save_ply(&scene, dir.join(EDITED_FILE))?;
    let summary = ReconstructSummary {
        config_hash: config.hash(),
        iterations: config.train.iterations,
        initial_gaussians,
        gaussians: scene.len(),
        edited_views: supervision.edited_views.len(),
        training_views: supervision.training_views.len(),
    };
    write(&dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary).map_err(Error::from)?)?;
    Ok(summary)
}

/// Consistency with the inpainted views (full frame, or the editing region
/// only when `masked`) and, with training cameras, background fidelity.
pub fn evaluate(config: &PipelineConfig, masked: bool) -> Result<Vec<(String, EvalReport)>, CliError> {
    let original = load_ply(&config.scene)?;
    let bbox = OrientedBBox::load(&config.bbox)?;
    let edited_scene = load_ply(config.reconstruct_dir().join(EDITED_FILE))?;
    let (edited, bundles) = edited_views(config)?;
    let masks: Vec<Image> = bundles.iter().map(|b| b.mask.clone()).collect();
    let scene_id = config.scene.file_stem().map(|s| s.to_string_lossy().into_owned());
    let meta = |r: EvalReport| r.with_metadata(scene_id.clone(), Some(config.hash()));
    let dir = config.evaluate_dir();
    let mut reports = vec![(
        "consistency".to_string(),
        meta(consistency_eval(&edited_scene, &edited, masked.then_some(&masks[..]), config.background)?),
    )];
    let training = training_views(config, &original, &bbox)?;
    if !training.is_empty() {
        reports.push((
            "background".to_string(),
            meta(background_fidelity_eval(&original, &edited_scene, &training, config.background)?),
        ));
    }
    for (stem, report) in &reports {
        report.save(&dir, stem)?;
    }
    let renders = edited
        .iter()
        .map(|v| Ok(render_fast(&edited_scene, &v.camera, config.background)?.color))
        .collect::<Result<Vec<_>, CliError>>()?;
    save_contact_sheet(&renders.iter().collect::<Vec<_>>(), dir.join("renders.png"))?;
    Ok(reports)
}
