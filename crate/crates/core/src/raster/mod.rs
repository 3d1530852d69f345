//! Differentiable splat rasterizer.
//!
//! Gaussians are projected with EWA splatting, sorted front to back by the
//! camera-space depth of their centers (ties broken by index), and alpha
//! composited per pixel:
//!
//! ```text
//! color = sum_j c_j a_j prod_{k<j} (1 - a_k) + T * background
//! ```
//!
//! The per-pixel opacity is `a_j = sigmoid(logit_j) * kernel(m)` with
//! `m = d^T cov2^-1 d`. The kernel is the Gaussian falloff truncated at the
//! 3-sigma ellipse and shifted so it reaches zero continuously there:
//! `kernel(m) = (exp(-m/2) - exp(-4.5)) / (1 - exp(-4.5))` for `m < 9`,
//! else 0. Because the footprint ends exactly where the tile binning stops,
//! [`render`] and [`render_fast`] agree bit-for-bit, and the loss stays
//! continuous in every parameter.

mod project;

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::GaussianScene;
use project::{FootprintGrad, Projected, View};

/// Centers closer than this to the camera plane are culled.
pub const NEAR_PLANE: f64 = 0.2;
/// Added to the 2D covariance diagonal, in px^2.
pub const COVARIANCE_BLUR: f64 = 0.3;
pub const FOOTPRINT_SIGMAS: f64 = 3.0;
pub const TILE_SIZE: usize = 16;
/// Compositing stops once transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-10;
/// Depth is reported only where accumulated alpha exceeds this.
pub const DEPTH_ALPHA_THRESHOLD: f64 = 1e-3;

const CUTOFF_M: f64 = FOOTPRINT_SIGMAS * FOOTPRINT_SIGMAS;
// Pad tile bounds so rounding never drops a pixel the kernel reaches.
const BIN_MARGIN: f64 = 1e-6;

#[inline]
fn kernel_floor() -> f64 {
    (-0.5 * CUTOFF_M).exp()
}

/// Truncated Gaussian falloff and its derivative in `m`.
#[inline]
fn kernel(m: f64) -> (f64, f64) {
    if m >= CUTOFF_M {
        return (0.0, 0.0);
    }
    let floor = kernel_floor();
    let e = (-0.5 * m).exp();
    let norm = 1.0 / (1.0 - floor);
    ((e - floor) * norm, -0.5 * e * norm)
}

/// Opacity of a footprint at a pixel center.
#[inline]
fn splat_alpha(s: &Projected, px: f64, py: f64) -> Option<Hit> {
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    let [a, b, c] = s.conic;
    let m = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
    if m >= CUTOFF_M {
        return None;
    }
    let (k, dk) = kernel(m);
    let alpha = s.opacity * k;
    if alpha <= 0.0 {
        return None;
    }
    Some(Hit {
        alpha,
        k,
        dk,
        dx,
        dy,
    })
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    alpha: f64,
    k: f64,
    dk: f64,
    dx: f64,
    dy: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PixelOut {
    color: [f64; 3],
    alpha: f64,
    depth: f64,
}

fn composite_pixel<'a>(
    splats: impl Iterator<Item = &'a Projected>,
    px: f64,
    py: f64,
    background: [f64; 3],
) -> PixelOut {
    let mut t = 1.0;
    let mut color = [0.0; 3];
    let mut weight_sum = 0.0;
    let mut weighted_z = 0.0;
    for s in splats {
        let Some(hit) = splat_alpha(s, px, py) else {
            continue;
        };
        let w = hit.alpha * t;
        for c in 0..3 {
            color[c] += w * s.color[c];
        }
        weight_sum += w;
        weighted_z += w * s.depth;
        t *= 1.0 - hit.alpha;
        if t < MIN_TRANSMITTANCE {
            break;
        }
    }
    debug_assert!(weight_sum <= 1.0 + 1e-9, "compositing weights sum to {weight_sum}");
    for c in 0..3 {
        color[c] += t * background[c];
    }
    let alpha = (1.0 - t).clamp(0.0, 1.0);
    let depth = if alpha > DEPTH_ALPHA_THRESHOLD {
        weighted_z / weight_sum
    } else {
        0.0
    };
    PixelOut {
        color,
        alpha,
        depth,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: Image,
    /// Alpha-normalized expected depth; 0 where alpha is below
    /// [`DEPTH_ALPHA_THRESHOLD`].
    pub depth: Image,
    pub alpha: Image,
}

/// Gradient of a scalar loss with respect to every scene parameter, plus
/// the per-Gaussian screen-space statistics used for densification.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrad {
    pub positions: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    /// Same layout as [`GaussianScene::sh_coeffs`].
    pub sh_coeffs: Vec<f64>,
    /// Norm of dL/d(projected center) in normalized device coordinates
    /// (pixel gradient scaled by half the image size).
    pub screen_grad_norms: Vec<f64>,
    /// Footprint radius in pixels; 0 for Gaussians not drawn.
    pub radii: Vec<f64>,
}

impl RenderGrad {
    pub fn zeros(scene: &GaussianScene) -> Self {
        let n = scene.len();
        Self {
            positions: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            log_scales: vec![[0.0; 3]; n],
            opacity_logits: vec![0.0; n],
            sh_coeffs: vec![0.0; scene.sh_coeffs().len()],
            screen_grad_norms: vec![0.0; n],
            radii: vec![0.0; n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.sh_coeffs.iter().all(|v| v.is_finite())
    }
}

fn check_scene(scene: &GaussianScene) -> Result<()> {
    let bad = |i: usize| Error::Data {
        index: i,
        message: "non-finite parameter".into(),
    };
    for i in 0..scene.len() {
        let ok = scene.positions[i].iter().all(|v| v.is_finite())
            && scene.rotations[i].iter().all(|v| v.is_finite())
            && scene.log_scales[i].iter().all(|v| v.is_finite())
            && scene.opacity_logits[i].is_finite()
            && scene.sh_of(i).iter().all(|v| v.is_finite());
        if !ok {
            return Err(bad(i));
        }
        if scene.rotations[i].iter().all(|&v| v == 0.0) {
            return Err(Error::Data {
                index: i,
                message: "zero-norm rotation".into(),
            });
        }
    }
    Ok(())
}

/// Projects and depth-sorts every visible Gaussian.
fn project_sorted(scene: &GaussianScene, view: &View) -> Vec<Projected> {
    let mut splats: Vec<Projected> = (0..scene.len())
        .into_par_iter()
        .filter_map(|i| project::project(scene, i, view))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    splats
}

fn assemble(width: usize, height: usize, pixels: impl Iterator<Item = (usize, PixelOut)>) -> RenderOutput {
    let mut color = Image::new(width, height, 3);
    let mut depth = Image::new(width, height, 1);
    let mut alpha = Image::new(width, height, 1);
    for (i, p) in pixels {
        color.data_mut()[i * 3..i * 3 + 3].copy_from_slice(&p.color);
        depth.data_mut()[i] = p.depth;
        alpha.data_mut()[i] = p.alpha;
    }
    RenderOutput {
        color,
        depth,
        alpha,
    }
}

/// Reference renderer: every pixel visits every projected Gaussian, with
/// no tiling or footprint culling beyond the kernel's own support.
pub fn render(scene: &GaussianScene, camera: &Camera, background: [f64; 3]) -> Result<RenderOutput> {
    check_scene(scene)?;
    let view = View::new(camera);
    let splats = project_sorted(scene, &view);
    let (w, h) = (view.width, view.height);
    let rows: Vec<Vec<PixelOut>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| composite_pixel(splats.iter(), x as f64 + 0.5, y as f64 + 0.5, background))
                .collect()
        })
        .collect();
    Ok(assemble(w, h, rows.into_iter().flatten().enumerate()))
}

/// Per-tile lists of indices into the depth-sorted splat array.
struct Tiling {
    tiles_x: usize,
    tiles_y: usize,
    lists: Vec<Vec<u32>>,
}

impl Tiling {
    fn new(splats: &[Projected], width: usize, height: usize) -> Self {
        let tiles_x = width.div_ceil(TILE_SIZE);
        let tiles_y = height.div_ceil(TILE_SIZE);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for (k, s) in splats.iter().enumerate() {
            // Pixel x is covered when |x + 0.5 - mean| <= extent.
            let rx = s.extent[0] + BIN_MARGIN;
            let ry = s.extent[1] + BIN_MARGIN;
            let x0 = (s.mean[0] - rx - 0.5).ceil().max(0.0);
            let x1 = (s.mean[0] + rx - 0.5).floor().min(width as f64 - 1.0);
            let y0 = (s.mean[1] - ry - 0.5).ceil().max(0.0);
            let y1 = (s.mean[1] + ry - 0.5).floor().min(height as f64 - 1.0);
            if x0 > x1 || y0 > y1 {
                continue;
            }
            let (tx0, tx1) = (x0 as usize / TILE_SIZE, x1 as usize / TILE_SIZE);
            let (ty0, ty1) = (y0 as usize / TILE_SIZE, y1 as usize / TILE_SIZE);
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    lists[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Self {
            tiles_x,
            tiles_y,
            lists,
        }
    }

    fn pixel_range(&self, tile: usize, width: usize, height: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let xs = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width);
        let ys = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height);
        (xs, ys)
    }

    fn count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }
}

/// Tile-based renderer: 16x16 tiles, each with the depth-sorted list of
/// footprints whose 3-sigma bounding box reaches it. Same output as
/// [`render`].
pub fn render_fast(scene: &GaussianScene, camera: &Camera, background: [f64; 3]) -> Result<RenderOutput> {
    check_scene(scene)?;
    let view = View::new(camera);
    let splats = project_sorted(scene, &view);
    let (w, h) = (view.width, view.height);
    let tiling = Tiling::new(&splats, w, h);
    let tiles: Vec<Vec<(usize, PixelOut)>> = (0..tiling.count())
        .into_par_iter()
        .map(|tile| {
            let list = &tiling.lists[tile];
            let (xs, ys) = tiling.pixel_range(tile, w, h);
            let mut out = Vec::with_capacity(xs.len() * ys.len());
            for y in ys {
                for x in xs.clone() {
                    let p = composite_pixel(
                        list.iter().map(|&k| &splats[k as usize]),
                        x as f64 + 0.5,
                        y as f64 + 0.5,
                        background,
                    );
                    out.push((y * w + x, p));
                }
            }
            out
        })
        .collect();
    Ok(assemble(w, h, tiles.into_iter().flatten()))
}

#[derive(Clone, Copy)]
struct Contribution {
    local: usize,
    hit: Hit,
    transmittance: f64,
}

/// Exact gradient of `sum(loss_grad * color)` with respect to the scene,
/// i.e. the backward pass for any loss whose gradient with respect to the
/// rendered color is `loss_grad` (a 3-channel image of the camera's size).
///
/// The depth sort is treated as locally constant. Per-tile partial sums are
/// reduced in tile order, so results are reproducible run to run.
pub fn render_backward(
    scene: &GaussianScene,
    camera: &Camera,
    background: [f64; 3],
    loss_grad: &Image,
) -> Result<RenderGrad> {
    check_scene(scene)?;
    let view = View::new(camera);
    let (w, h) = (view.width, view.height);
    if loss_grad.width() != w || loss_grad.height() != h || loss_grad.channels() != 3 {
        return Err(Error::param(format!(
            "loss gradient is {}x{}x{}, expected {w}x{h}x3",
            loss_grad.width(),
            loss_grad.height(),
            loss_grad.channels()
        )));
    }
    let splats = project_sorted(scene, &view);
    let tiling = Tiling::new(&splats, w, h);
    let g = loss_grad.data();

    let per_tile: Vec<Vec<FootprintGrad>> = (0..tiling.count())
        .into_par_iter()
        .map(|tile| {
            let list = &tiling.lists[tile];
            let mut acc = vec![FootprintGrad::default(); list.len()];
            let (xs, ys) = tiling.pixel_range(tile, w, h);
            let mut contribs: Vec<Contribution> = Vec::with_capacity(64);
            for y in ys {
                for x in xs.clone() {
                    let pix = y * w + x;
                    let gp = [g[pix * 3], g[pix * 3 + 1], g[pix * 3 + 2]];
                    if gp == [0.0; 3] {
                        continue;
                    }
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    contribs.clear();
                    let mut t = 1.0;
                    for (local, &k) in list.iter().enumerate() {
                        let Some(hit) = splat_alpha(&splats[k as usize], px, py) else {
                            continue;
                        };
                        contribs.push(Contribution {
                            local,
                            hit,
                            transmittance: t,
                        });
                        t *= 1.0 - hit.alpha;
                        if t < MIN_TRANSMITTANCE {
                            break;
                        }
                    }
                    // Color seen behind the current splat, built back to front.
                    let mut behind = background;
                    for c in contribs.iter().rev() {
                        let s = &splats[list[c.local] as usize];
                        let Hit {
                            alpha,
                            k,
                            dk,
                            dx,
                            dy,
                        } = c.hit;
                        let a = &mut acc[c.local];
                        let weight = alpha * c.transmittance;
                        let mut d_alpha = 0.0;
                        for ch in 0..3 {
                            a.color[ch] += gp[ch] * weight;
                            d_alpha += gp[ch] * (s.color[ch] - behind[ch]);
                        }
                        d_alpha *= c.transmittance;
                        for ch in 0..3 {
                            behind[ch] = s.color[ch] * alpha + (1.0 - alpha) * behind[ch];
                        }
                        a.opacity += d_alpha * k;
                        let d_m = d_alpha * s.opacity * dk;
                        let [qa, qb, qc] = s.conic;
                        a.conic[0] += d_m * dx * dx;
                        a.conic[1] += d_m * dx * dy;
                        a.conic[2] += d_m * dy * dy;
                        // m = d^T Q d with d = pixel - mean.
                        a.mean[0] -= 2.0 * d_m * (qa * dx + qb * dy);
                        a.mean[1] -= 2.0 * d_m * (qb * dx + qc * dy);
                    }
                }
            }
            acc
        })
        .collect();

    let mut footprint = vec![FootprintGrad::default(); splats.len()];
    for (tile, acc) in per_tile.iter().enumerate() {
        for (local, a) in acc.iter().enumerate() {
            footprint[tiling.lists[tile][local] as usize].add(a);
        }
    }

    let k3 = scene.sh_coeff_count() * 3;
    let chained: Vec<(project::ParamGrad, Vec<f64>)> = splats
        .par_iter()
        .zip(footprint.par_iter())
        .map(|(s, fg)| {
            let mut sh = vec![0.0; k3];
            let pg = project::backward(scene, s, &view, fg, &mut sh);
            (pg, sh)
        })
        .collect();

    let mut grad = RenderGrad::zeros(scene);
    for ((s, fg), (pg, sh)) in splats.iter().zip(&footprint).zip(chained) {
        let i = s.index;
        grad.positions[i] = pg.position;
        grad.rotations[i] = pg.rotation;
        grad.log_scales[i] = pg.log_scale;
        grad.opacity_logits[i] = pg.opacity_logit;
        grad.sh_coeffs[i * k3..(i + 1) * k3].copy_from_slice(&sh);
        let nx = fg.mean[0] * 0.5 * w as f64;
        let ny = fg.mean[1] * 0.5 * h as f64;
        grad.screen_grad_norms[i] = (nx * nx + ny * ny).sqrt();
        grad.radii[i] = s.extent[0].max(s.extent[1]);
    }
    Ok(grad)
}
