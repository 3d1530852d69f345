//! On-disk view bundles.
//!
//! A bundle directory holds `manifest.json`, listing named groups of views
//! (one per trajectory arc), and per view:
//!
//! - `<view>.bundle.json`: camera plus the payload file names
//! - `<view>_background.pfm`, `<view>_depth.pfm`: float images
//! - `<view>_mask.png`: 1-bit mask
//! - `<view>_background.png`, `<view>_depth.png` (+ `.json` range): previews
//!
//! Float payloads are stored as f32, so a reload equals the in-memory
//! bundle up to f32 rounding and re-saving a reloaded bundle reproduces the
//! files byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ViewBundle;
use crate::camera::{Camera, CameraRecord};
use crate::error::{Error, Result};
use crate::imageio::{load_mask_png, load_pfm, save_depth_normalized, save_mask_png, save_pfm, save_png8};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleGroup {
    pub name: String,
    pub views: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub groups: Vec<BundleGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    camera: CameraRecord,
    background: String,
    mask: String,
    depth: String,
}

pub fn save_bundles(dir: impl AsRef<Path>, groups: &[(String, Vec<ViewBundle>)], config_hash: Option<&str>) -> Result<BundleManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    let mut manifest = BundleManifest {
        config_hash: config_hash.map(str::to_string),
        groups: Vec::new(),
    };
    for (group, bundles) in groups {
        let mut views = Vec::new();
        for (i, b) in bundles.iter().enumerate() {
            b.validate()?;
            let name = format!("{group}_{i:02}");
            let file = BundleFile {
                camera: CameraRecord::from(&b.camera),
                background: format!("{name}_background.pfm"),
                mask: format!("{name}_mask.png"),
                depth: format!("{name}_depth.pfm"),
            };
            save_pfm(&b.background, dir.join(&file.background))?;
            save_mask_png(&b.mask, dir.join(&file.mask))?;
            save_pfm(&b.depth, dir.join(&file.depth))?;
            save_png8(&b.background, dir.join(format!("{name}_background.png")))?;
            save_depth_normalized(&b.depth, dir.join(format!("{name}_depth.png")))?;
            let path = dir.join(format!("{name}.bundle.json"));
            fs::write(&path, serde_json::to_string_pretty(&file)?).map_err(|e| Error::io_at(&path, e))?;
            views.push(name);
        }
        manifest.groups.push(BundleGroup {
            name: group.clone(),
            views,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io_at(&path, e))?;
    Ok(manifest)
}

pub fn load_bundles(dir: impl AsRef<Path>) -> Result<(BundleManifest, Vec<(String, Vec<ViewBundle>)>)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io_at(&path, e))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    let mut groups = Vec::new();
    for g in &manifest.groups {
        let mut bundles = Vec::new();
        for name in &g.views {
            let path = dir.join(format!("{name}.bundle.json"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io_at(&path, e))?;
            let file: BundleFile = serde_json::from_str(&text)?;
            let bundle = ViewBundle {
                camera: Camera::try_from(&file.camera)?,
                background: load_pfm(dir.join(&file.background))?,
                mask: load_mask_png(dir.join(&file.mask))?,
                depth: load_pfm(dir.join(&file.depth))?,
            };
            bundle.validate()?;
            bundles.push(bundle);
        }
        groups.push((g.name.clone(), bundles));
    }
    Ok((manifest, groups))
}
