//! Mask-aware fine-tuning of a Gaussian scene.
//!
//! Edited views (inpainted images along the editing trajectories) are
//! supervised on the full frame; original training views are supervised
//! only outside the editing mask, so the background stays anchored to the
//! original captures while the box region is free to change.

mod density;
pub mod loss;
mod train;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;

pub use density::{density_control, DensifyOutcome, DensifyStats};
pub use loss::{l_gs, l_rec_masked, ssim, ssim_map, ssim_with_grad, LossValue};
pub use train::{finetune, LogRecord, Trainer};

/// Optimization settings. Defaults follow the reference Gaussian Splatting
/// trainer: 30k iterations, position learning rate decaying exponentially
/// from 1.6e-4 to 1.6e-6 (times the scene extent), densification every 100
/// steps between iterations 500 and 15000, opacity reset every 3000 steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lambda_ssim: f64,
    pub seed: u64,
    pub position_lr_init: f64,
    pub position_lr_final: f64,
    /// Steps over which the position learning rate decays; `None` uses
    /// `iterations`.
    pub position_lr_max_steps: Option<usize>,
    pub feature_lr: f64,
    pub opacity_lr: f64,
    pub scaling_lr: f64,
    pub rotation_lr: f64,
    pub densify_interval: usize,
    pub densify_from: usize,
    pub densify_until: usize,
    /// Threshold on the averaged view-space positional gradient norm.
    pub densify_grad_threshold: f64,
    /// Gaussians larger than this fraction of the extent are split, smaller
    /// ones cloned.
    pub percent_dense: f64,
    pub opacity_prune_threshold: f64,
    pub opacity_reset_interval: Option<usize>,
    /// Screen radius (pixels) above which Gaussians are pruned once the
    /// first opacity reset has happened.
    pub max_screen_size: Option<f64>,
    /// World-space size for the learning rates and size criteria; `None`
    /// derives it from the spread of the supervision cameras.
    pub scene_extent: Option<f64>,
    /// Edited views are this many times as likely to be sampled as each
    /// training view.
    pub edited_view_weight: usize,
    pub background: [f64; 3],
    /// Write a JSON-lines log record every this many iterations.
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            lambda_ssim: 0.2,
            seed: 0,
            position_lr_init: 1.6e-4,
            position_lr_final: 1.6e-6,
            position_lr_max_steps: None,
            feature_lr: 0.0025,
            opacity_lr: 0.025,
            scaling_lr: 0.005,
            rotation_lr: 0.001,
            densify_interval: 100,
            densify_from: 500,
            densify_until: 15_000,
            densify_grad_threshold: 0.0002,
            percent_dense: 0.01,
            opacity_prune_threshold: 0.005,
            opacity_reset_interval: Some(3000),
            max_screen_size: Some(20.0),
            scene_extent: None,
            edited_view_weight: 1,
            background: [0.0; 3],
            log_interval: 10,
        }
    }
}

impl TrainConfig {
    /// Schedule for small synthetic scenes: 3000 iterations, densifying
    /// between steps 100 and 1500, one opacity reset at step 1000.
    pub fn toy() -> Self {
        Self {
            iterations: 3000,
            densify_from: 100,
            densify_until: 1500,
            opacity_reset_interval: Some(1000),
            max_screen_size: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(Error::param("lambda_ssim must lie in [0, 1]"));
        }
        let rates = [
            self.position_lr_init,
            self.position_lr_final,
            self.feature_lr,
            self.opacity_lr,
            self.scaling_lr,
            self.rotation_lr,
        ];
        if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::param("learning rates must be finite and non-negative"));
        }
        if self.densify_interval == 0 || self.log_interval == 0 {
            return Err(Error::param("densify_interval and log_interval must be at least 1"));
        }
        if !(self.densify_grad_threshold > 0.0) || !(self.opacity_prune_threshold > 0.0) || !(self.percent_dense > 0.0) {
            return Err(Error::param("densification thresholds must be positive"));
        }
        if self.opacity_reset_interval == Some(0) || self.edited_view_weight == 0 {
            return Err(Error::param("opacity_reset_interval and edited_view_weight must be at least 1"));
        }
        if let Some(e) = self.scene_extent {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::param("scene_extent must be positive"));
            }
        }
        Ok(())
    }

    /// Position learning rate at `step` (0-based), before extent scaling.
    pub fn position_lr(&self, step: usize) -> f64 {
        let max = self.position_lr_max_steps.unwrap_or(self.iterations).max(1);
        let t = (step as f64 / max as f64).clamp(0.0, 1.0);
        if self.position_lr_init <= 0.0 || self.position_lr_final <= 0.0 {
            return self.position_lr_init * (1.0 - t) + self.position_lr_final * t;
        }
        (self.position_lr_init.ln() * (1.0 - t) + self.position_lr_final.ln() * t).exp()
    }
}

/// An inpainted view, supervised on the full frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EditedView {
    pub camera: Camera,
    pub image: Image,
}

/// An original capture, supervised only where `mask` is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingView {
    pub camera: Camera,
    pub image: Image,
    pub mask: Image,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupervisionSet {
    pub edited_views: Vec<EditedView>,
    pub training_views: Vec<TrainingView>,
}

impl SupervisionSet {
    pub fn len(&self) -> usize {
        self.edited_views.len() + self.training_views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::param("supervision set has no views"));
        }
        let rgb = |img: &Image, cam: &Camera| {
            img.channels() == 3 && img.width() == cam.width() && img.height() == cam.height()
        };
        for (i, v) in self.edited_views.iter().enumerate() {
            if !rgb(&v.image, &v.camera) {
                return Err(Error::param(format!("edited view {i}: image does not match its camera")));
            }
        }
        for (i, v) in self.training_views.iter().enumerate() {
            if !rgb(&v.image, &v.camera) {
                return Err(Error::param(format!("training view {i}: image does not match its camera")));
            }
            v.image.check_mask(&v.mask)?;
            if !v.mask.is_binary() {
                return Err(Error::param(format!("training view {i}: mask is not binary")));
            }
        }
        Ok(())
    }

    /// Radius of the camera cloud, enlarged by 10%, as in the reference
    /// trainer; 1 for a single camera.
    pub fn camera_extent(&self) -> f64 {
        let centers: Vec<_> = self
            .edited_views
            .iter()
            .map(|v| v.camera.position())
            .chain(self.training_views.iter().map(|v| v.camera.position()))
            .collect();
        if centers.is_empty() {
            return 1.0;
        }
        let mean = centers.iter().fold(nalgebra::Vector3::zeros(), |a, c| a + c) / centers.len() as f64;
        let radius = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max) * 1.1;
        if radius > 0.0 {
            radius
        } else {
            1.0
        }
    }
}
