//! Image-quality metrics and evaluation reports.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::raster::render_fast;
use crate::recon::{ssim_map, EditedView, TrainingView};
use crate::scene::GaussianScene;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Full,
    /// Pixels where the editing mask is 1.
    Masked,
    /// Pixels where the editing mask is 0.
    Unmasked,
}

fn check_region(a: &Image, b: &Image, region: Option<&Image>) -> Result<usize> {
    a.check_same_shape(b)?;
    let count = match region {
        Some(m) => {
            a.check_mask(m)?;
            m.count_nonzero()
        }
        None => a.pixel_count(),
    };
    if count == 0 {
        return Err(Error::param("evaluation region is empty"));
    }
    Ok(count)
}

/// `10 log10(1 / MSE)` over the pixels where `region` is nonzero (all
/// pixels when `None`), averaging over channels; capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image, region: Option<&Image>) -> Result<f64> {
    let count = check_region(a, b, region)?;
    let ch = a.channels();
    let mut sum = 0.0;
    for i in 0..a.pixel_count() {
        if region.is_some_and(|m| m.data()[i] == 0.0) {
            continue;
        }
        for c in 0..ch {
            let d = a.data()[i * ch + c] - b.data()[i * ch + c];
            sum += d * d;
        }
    }
    let mse = sum / (count * ch) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean of the SSIM map over the region. Windows are computed on the full
/// images, so content just outside the region still influences the score.
pub fn region_ssim(a: &Image, b: &Image, region: Option<&Image>) -> Result<f64> {
    let count = check_region(a, b, region)?;
    let map = ssim_map(a, b)?;
    let sum: f64 = match region {
        Some(m) => map.data().iter().zip(m.data()).filter(|(_, w)| **w != 0.0).map(|(s, _)| s).sum(),
        None => map.data().iter().sum(),
    };
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub region: Region,
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl EvalReport {
    fn from_views(region: Region, views: Vec<ViewMetrics>) -> Self {
        let n = views.len().max(1) as f64;
        Self {
            mean_psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
            mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
            region,
            views,
            scene_id: None,
            config_hash: None,
        }
    }

    pub fn with_metadata(mut self, scene_id: Option<String>, config_hash: Option<String>) -> Self {
        self.scene_id = scene_id;
        self.config_hash = config_hash;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per view plus a final `mean` row.
    pub fn to_csv(&self) -> String {
        let region = serde_json::to_value(self.region)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let mut out = String::from("view,region,psnr,ssim\n");
        for v in &self.views {
            let _ = writeln!(out, "{},{region},{},{}", v.view, v.psnr, v.ssim);
        }
        let _ = writeln!(out, "mean,{region},{},{}", self.mean_psnr, self.mean_ssim);
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
        for (ext, text) in [("json", self.to_json()?), ("csv", self.to_csv())] {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, text).map_err(|e| Error::io_at(&path, e))?;
        }
        Ok(())
    }
}

/// Scores `(rendered, reference, region)` triples in parallel.
pub fn evaluate_pairs(region: Region, pairs: &[(Image, Image, Option<Image>)]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::param("nothing to evaluate"));
    }
    let views = pairs
        .par_iter()
        .enumerate()
        .map(|(view, (a, b, m))| {
            Ok(ViewMetrics {
                view,
                psnr: psnr(a, b, m.as_ref())?,
                ssim: region_ssim(a, b, m.as_ref())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_views(region, views))
}

/// How well the reconstructed scene reproduces the inpainted views it was
/// trained on. With `masks`, only the editing region is scored.
pub fn consistency_eval(
    scene: &GaussianScene,
    edited_views: &[EditedView],
    masks: Option<&[Image]>,
    background: [f64; 3],
) -> Result<EvalReport> {
    if edited_views.is_empty() {
        return Err(Error::param("no edited views to evaluate"));
    }
    if masks.is_some_and(|m| m.len() != edited_views.len()) {
        return Err(Error::param("one mask per edited view is required"));
    }
    let pairs = edited_views
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let r = render_fast(scene, &v.camera, background)?.color;
            Ok((r, v.image.clone(), masks.map(|m| m[i].clone())))
        })
        .collect::<Result<Vec<_>>>()?;
    let region = if masks.is_some() { Region::Masked } else { Region::Full };
    evaluate_pairs(region, &pairs)
}

/// Agreement between original and edited scenes outside the editing masks
/// of the training views.
pub fn background_fidelity_eval(
    original: &GaussianScene,
    edited: &GaussianScene,
    training_views: &[TrainingView],
    background: [f64; 3],
) -> Result<EvalReport> {
    if training_views.is_empty() {
        return Err(Error::param("no training views to evaluate"));
    }
    let pairs = training_views
        .par_iter()
        .map(|v| {
            let a = render_fast(edited, &v.camera, background)?.color;
            let b = render_fast(original, &v.camera, background)?.color;
            Ok((a, b, Some(v.mask.complement())))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_pairs(Region::Unmasked, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_hit_the_cap() {
        let a = Image::rgb(5, 5, [0.3; 3]);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP);
    }

    #[test]
    fn uniform_error_gives_closed_form() {
        let a = Image::rgb(4, 4, [0.5; 3]);
        let b = Image::rgb(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b, None).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn empty_region_is_rejected() {
        let a = Image::rgb(4, 4, [0.5; 3]);
        assert!(matches!(psnr(&a, &a, Some(&Image::new(4, 4, 1))), Err(Error::Parameter(_))));
        assert!(evaluate_pairs(Region::Full, &[]).is_err());
    }

    #[test]
    fn csv_has_mean_row() {
        let a = Image::rgb(4, 4, [0.5; 3]);
        let r = evaluate_pairs(Region::Full, &[(a.clone(), a, None)]).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("view,region,psnr,ssim\n0,full,99,"));
        assert!(csv.lines().last().unwrap().starts_with("mean,full,99,"));
    }
}
