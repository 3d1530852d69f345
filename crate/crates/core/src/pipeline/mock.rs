//! Deterministic stand-in for a multi-view inpainting model.
//!
//! The mock picks a procedural Gaussian object from (prompt, seed), places
//! it inside the editing box and renders it into every view with the real
//! rasterizer. Because all views see the same 3D object, the outputs are
//! multi-view consistent by construction, and the object doubles as ground
//! truth for end-to-end tests.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ViewBundle;
use crate::camera::OrientedBBox;
use crate::error::Result;
use crate::image::Image;
use crate::raster::render_fast;
use crate::scene::{GaussianScene, Splat};

/// Objects fill this fraction of the box half extents.
const FIT: f64 = 0.7;

const PALETTE: [[f64; 3]; 8] = [
    [0.85, 0.20, 0.15],
    [0.15, 0.55, 0.85],
    [0.95, 0.75, 0.10],
    [0.20, 0.70, 0.30],
    [0.60, 0.25, 0.75],
    [0.95, 0.50, 0.20],
    [0.10, 0.65, 0.65],
    [0.90, 0.90, 0.85],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    BlobCluster,
    Snowman,
    Crate,
}

#[derive(Debug, Clone)]
pub struct MockInpainter {
    bbox: OrientedBBox,
    scene: Option<GaussianScene>,
    background: [f64; 3],
    independent_views: bool,
}

impl MockInpainter {
    /// Mock that paints the object over each bundle's background image.
    pub fn new(bbox: OrientedBBox) -> Self {
        Self {
            bbox,
            scene: None,
            background: [0.0; 3],
            independent_views: false,
        }
    }

    /// Renders `scene` together with the object instead, so the object is
    /// correctly occluded by scene content in front of it.
    pub fn with_scene(mut self, scene: GaussianScene, background: [f64; 3]) -> Self {
        self.scene = Some(scene);
        self.background = background;
        self
    }

    /// Draws an unrelated object in every view, imitating per-view 2D
    /// inpainting with no cross-view consistency.
    pub fn with_independent_views(mut self, on: bool) -> Self {
        self.independent_views = on;
        self
    }

    pub fn bbox(&self) -> &OrientedBBox {
        &self.bbox
    }

    pub fn object_kind(prompt: &str, seed: u64) -> ObjectKind {
        match object_hash(prompt, seed) % 3 {
            0 => ObjectKind::BlobCluster,
            1 => ObjectKind::Snowman,
            _ => ObjectKind::Crate,
        }
    }

    pub fn object_color(seed: u64) -> [f64; 3] {
        PALETTE[(seed % PALETTE.len() as u64) as usize]
    }

    /// The object the mock inserts for `(prompt, seed)`, in world space.
    pub fn hidden_object(&self, prompt: &str, seed: u64) -> GaussianScene {
        let mut rng = ChaCha8Rng::seed_from_u64(object_hash(prompt, seed));
        let base = Self::object_color(seed);
        let parts: Vec<([f64; 3], [f64; 3], usize, f64)> = match Self::object_kind(prompt, seed) {
            ObjectKind::BlobCluster => (0..4)
                .map(|k| {
                    let c = [
                        rng.random_range(-0.45..0.45),
                        rng.random_range(-0.45..0.45),
                        rng.random_range(-0.45..0.45),
                    ];
                    let r = rng.random_range(0.35..0.5);
                    (c, [r; 3], 110, 0.8 + 0.1 * k as f64)
                })
                .collect(),
            ObjectKind::Snowman => vec![
                ([0.0, 0.0, -0.55], [0.45; 3], 170, 1.0),
                ([0.0, 0.0, 0.1], [0.32; 3], 100, 0.9),
                ([0.0, 0.0, 0.6], [0.22; 3], 60, 1.1),
            ],
            ObjectKind::Crate => vec![([0.0; 3], [0.6; 3], 400, 1.0)],
        };
        let sigma = 0.18 * FIT * self.bbox.half_extents.min();
        let mut scene = GaussianScene::new(0);
        for (center, radii, count, shade) in parts {
            let color = base.map(|c| (c * shade).clamp(0.0, 1.0));
            let mut placed = 0;
            while placed < count {
                let u = [
                    rng.random_range(-1.0..1.0f64),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                let ball = u.iter().map(|v| v * v).sum::<f64>() <= 1.0;
                let in_cube = matches!(Self::object_kind(prompt, seed), ObjectKind::Crate);
                if !ball && !in_cube {
                    continue;
                }
                let local = Vector3::new(
                    center[0] + radii[0] * u[0],
                    center[1] + radii[1] * u[1],
                    center[2] + radii[2] * u[2],
                )
                .component_mul(&self.bbox.half_extents)
                    * FIT;
                let p = self.bbox.to_world(&local);
                let jitter = rng.random_range(0.9..1.0);
                let rgb = color.map(|c| c * jitter);
                scene
                    .push(Splat::isotropic([p.x as f32, p.y as f32, p.z as f32], sigma as f32, 0.9, rgb))
                    .expect("procedural splats are finite");
                placed += 1;
            }
        }
        scene
    }

    fn view_seed(&self, seed: u64, view: usize) -> u64 {
        if self.independent_views {
            seed ^ splitmix(view as u64 + 1)
        } else {
            seed
        }
    }

    /// The object drawn into view `view` of a request with `seed`.
    pub fn object_for_view(&self, prompt: &str, seed: u64, view: usize) -> GaussianScene {
        self.hidden_object(prompt, self.view_seed(seed, view))
    }

    pub fn inpaint(&self, bundles: &[ViewBundle], prompt: &str, seed: u64) -> Result<Vec<Image>> {
        let shared = self.hidden_object(prompt, seed);
        let shared_full = match (&self.scene, self.independent_views) {
            (Some(scene), false) => Some(scene.merged(&shared)),
            _ => None,
        };
        bundles
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let painted = match (&self.scene, &shared_full) {
                    (_, Some(full)) => render_fast(full, &b.camera, self.background)?.color,
                    (Some(scene), None) => {
                        let full = scene.merged(&self.object_for_view(prompt, seed, i));
                        render_fast(&full, &b.camera, self.background)?.color
                    }
                    (None, None) => {
                        let own;
                        let object = if self.independent_views {
                            own = self.object_for_view(prompt, seed, i);
                            &own
                        } else {
                            &shared
                        };
                        let out = render_fast(object, &b.camera, [0.0; 3])?;
                        over(&out.color, &out.alpha, &b.background)
                    }
                };
                Ok(b.background.composite_inside(&painted, &b.mask))
            })
            .collect()
    }
}

/// Premultiplied `front` with coverage `alpha` over `back`.
fn over(front: &Image, alpha: &Image, back: &Image) -> Image {
    let mut out = front.clone();
    for (i, px) in out.data_mut().chunks_exact_mut(3).enumerate() {
        let t = 1.0 - alpha.data()[i];
        for c in 0..3 {
            px[c] += t * back.data()[i * 3 + c];
        }
    }
    out
}

fn object_hash(prompt: &str, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
