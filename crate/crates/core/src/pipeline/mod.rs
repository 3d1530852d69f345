//! Inpainting inputs and the inpainting service boundary.
//!
//! For each editing viewpoint the original scene is rendered as the
//! background, the box is projected to a binary mask, and a coarse prior
//! filling the box is rendered for a depth reference. Bundles go to an
//! inpainter (remote service or [`MockInpainter`]); whatever comes back is
//! composited inside the mask so pixels outside it are exactly the
//! background.

mod bundle_io;
mod mock;
pub mod protocol;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{central_index, point_in_bbox, Camera, OrientedBBox};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{project_bbox_mask_with, MaskMode};
use crate::raster::render_fast;
use crate::scene::{GaussianScene, Splat};

pub use bundle_io::{load_bundles, save_bundles, BundleManifest};
pub use mock::{MockInpainter, ObjectKind};
pub use protocol::HttpInpainter;

/// Per-viewpoint inpainting inputs. `depth` is zero (the sentinel) outside
/// the mask and wherever the coarse prior is transparent.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBundle {
    pub camera: Camera,
    pub background: Image,
    pub mask: Image,
    pub depth: Image,
}

impl ViewBundle {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.camera.width(), self.camera.height());
        let sized = |img: &Image, c: usize| img.width() == w && img.height() == h && img.channels() == c;
        if !sized(&self.background, 3) || !sized(&self.mask, 1) || !sized(&self.depth, 1) {
            return Err(Error::param(format!("bundle images must be {w}x{h} (RGB background, 1-channel mask and depth)")));
        }
        if !self.mask.is_binary() {
            return Err(Error::param("bundle mask is not binary"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    pub background: [f64; 3],
    pub mask_mode: MaskMode,
}

/// Renders background, mask and masked coarse depth for every camera.
///
/// Fails with [`Error::EmptyEditingRegion`] when no mask has a single set
/// pixel.
pub fn extract_view_bundles(
    original: &GaussianScene,
    coarse: &GaussianScene,
    bbox: &OrientedBBox,
    cameras: &[Camera],
    options: &ExtractOptions,
) -> Result<Vec<ViewBundle>> {
    if cameras.is_empty() {
        return Err(Error::param("no editing cameras"));
    }
    original.validate()?;
    coarse.validate()?;
    let bundles = cameras
        .par_iter()
        .map(|camera| {
            let background = render_fast(original, camera, options.background)?.color;
            let mask = project_bbox_mask_with(bbox, camera, options.mask_mode);
            let depth = render_fast(coarse, camera, [0.0; 3])?.depth.multiply_by_mask(&mask);
            Ok(ViewBundle {
                camera: camera.clone(),
                background,
                mask,
                depth,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if bundles.iter().all(|b| b.mask.count_nonzero() == 0) {
        return Err(Error::EmptyEditingRegion);
    }
    Ok(bundles)
}

/// Gray isotropic Gaussians filling the box's inscribed ellipsoid: a
/// geometric stand-in for a text-guided coarse model, used only for its
/// depth.
pub fn seed_coarse_prior(bbox: &OrientedBBox, n_gaussians: usize, seed: u64) -> Result<GaussianScene> {
    if n_gaussians == 0 {
        return Err(Error::param("coarse prior needs at least one Gaussian"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 0.05 * bbox.half_extents.min();
    let mut scene = GaussianScene::new(0);
    while scene.len() < n_gaussians {
        // Rejection sampling in the unit ball, shrunk so f32 rounding of
        // points on the ellipsoid never leaves the box.
        let u = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if u.norm_squared() > 1.0 {
            continue;
        }
        let local = u.component_mul(&bbox.half_extents) * 0.99;
        let p = bbox.to_world(&local);
        let position = [p.x as f32, p.y as f32, p.z as f32];
        let stored = Vector3::new(position[0] as f64, position[1] as f64, position[2] as f64);
        if !point_in_bbox(bbox, &stored) {
            continue;
        }
        scene.push(Splat::isotropic(position, sigma as f32, 0.5, [0.5; 3]))?;
    }
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintRequest {
    pub bundles: Vec<ViewBundle>,
    pub prompt: String,
    pub conditioning_view_index: usize,
    pub seed: u64,
}

impl InpaintRequest {
    /// Request with the conditioning view at the trajectory center.
    pub fn new(bundles: Vec<ViewBundle>, prompt: impl Into<String>, seed: u64) -> Result<Self> {
        let conditioning_view_index = central_index(bundles.len())?;
        Ok(Self {
            bundles,
            prompt: prompt.into(),
            conditioning_view_index,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.bundles.is_empty() {
            return Err(Error::param("inpaint request has no views"));
        }
        if self.conditioning_view_index >= self.bundles.len() {
            return Err(Error::param(format!(
                "conditioning view {} out of range for {} views",
                self.conditioning_view_index,
                self.bundles.len()
            )));
        }
        self.bundles.iter().try_for_each(ViewBundle::validate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintResponse {
    pub images: Vec<Image>,
}

/// Where inpainting requests are served.
#[derive(Debug, Clone)]
pub enum Endpoint {
    Mock(MockInpainter),
    Http(HttpInpainter),
}

/// Runs the inpainter and composites each result into its background
/// inside the mask.
pub fn inpaint(request: &InpaintRequest, endpoint: &Endpoint) -> Result<InpaintResponse> {
    request.validate()?;
    let raw = match endpoint {
        Endpoint::Mock(m) => m.inpaint(&request.bundles, &request.prompt, request.seed)?,
        Endpoint::Http(h) => h.inpaint(request)?,
    };
    if raw.len() != request.bundles.len() {
        return Err(Error::Protocol(format!(
            "expected {} images, got {}",
            request.bundles.len(),
            raw.len()
        )));
    }
    let images = request
        .bundles
        .iter()
        .zip(&raw)
        .enumerate()
        .map(|(i, (b, img))| {
            if !img.same_shape(&b.background) {
                return Err(Error::Protocol(format!(
                    "image {i} is {}x{}x{}, expected {}x{}x3",
                    img.width(),
                    img.height(),
                    img.channels(),
                    b.background.width(),
                    b.background.height()
                )));
            }
            Ok(b.background.composite_inside(img, &b.mask))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InpaintResponse { images })
}

/// The inpainted image at the central trajectory viewpoint.
pub fn conditioning_image<'a>(bundles: &[ViewBundle], response: &'a InpaintResponse) -> Result<&'a Image> {
    if bundles.len() != response.images.len() {
        return Err(Error::param("response is not aligned with bundles"));
    }
    Ok(&response.images[central_index(bundles.len())?])
}
