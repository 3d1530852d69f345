//! Photometric losses and their gradients with respect to the rendering.

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "same"-size convolution of one plane with zero padding. The
/// kernel is symmetric, so this is also its own adjoint.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = SSIM_WINDOW as isize / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = x as isize + i as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * plane[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn plane(img: &Image, c: usize) -> Vec<f64> {
    img.data().iter().skip(c).step_by(img.channels()).copied().collect()
}

struct SsimPlane {
    map: Vec<f64>,
    // Partials of the map with respect to mu_x, sigma_xx and sigma_xy.
    d_mu: Vec<f64>,
    d_sxx: Vec<f64>,
    d_sxy: Vec<f64>,
}

fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW], with_grad: bool) -> SsimPlane {
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_x = blur(x, w, h, k);
    let mu_y = blur(y, w, h, k);
    let exx = blur(&prod(x, x), w, h, k);
    let eyy = blur(&prod(y, y), w, h, k);
    let exy = blur(&prod(x, y), w, h, k);
    let n = w * h;
    let mut out = SsimPlane {
        map: vec![0.0; n],
        d_mu: Vec::new(),
        d_sxx: Vec::new(),
        d_sxy: Vec::new(),
    };
    if with_grad {
        out.d_mu = vec![0.0; n];
        out.d_sxx = vec![0.0; n];
        out.d_sxy = vec![0.0; n];
    }
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sxx = exx[i] - mx * mx;
        let syy = eyy[i] - my * my;
        let sxy = exy[i] - mx * my;
        let p = 2.0 * mx * my + SSIM_C1;
        let q = 2.0 * sxy + SSIM_C2;
        let nn = mx * mx + my * my + SSIM_C1;
        let d = sxx + syy + SSIM_C2;
        let s = p * q / (nn * d);
        out.map[i] = s;
        if with_grad {
            out.d_mu[i] = 2.0 * my * q / (nn * d) - s * 2.0 * mx / nn;
            out.d_sxx[i] = -s / d;
            out.d_sxy[i] = 2.0 * p / (nn * d);
        }
    }
    out
}

fn check_rgb_pair(a: &Image, b: &Image) -> Result<()> {
    a.check_same_shape(b)?;
    if a.pixel_count() == 0 {
        return Err(Error::param("images are empty"));
    }
    Ok(())
}

/// Per-pixel SSIM averaged over channels, as a 1-channel image.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Image> {
    check_rgb_pair(a, b)?;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let k = gaussian_window();
    let mut acc = vec![0.0; w * h];
    for c in 0..ch {
        let p = ssim_plane(&plane(a, c), &plane(b, c), w, h, &k, false);
        for (v, s) in acc.iter_mut().zip(&p.map) {
            *v += s / ch as f64;
        }
    }
    Image::from_data(w, h, 1, acc)
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), zero-padded at the
/// borders, averaged over all pixels and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let map = ssim_map(a, b)?;
    Ok(map.data().iter().sum::<f64>() / map.pixel_count() as f64)
}

/// Mean SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    check_rgb_pair(a, b)?;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let k = gaussian_window();
    let count = (w * h * ch) as f64;
    let mut total = 0.0;
    let mut grad = Image::new(w, h, ch);
    for c in 0..ch {
        let (x, y) = (plane(a, c), plane(b, c));
        let p = ssim_plane(&x, &y, w, h, &k, true);
        total += p.map.iter().sum::<f64>();
        let mu_x = blur(&x, w, h, &k);
        let mu_y = blur(&y, w, h, &k);
        // sigma_xx = E[x^2] - mu_x^2 and sigma_xy = E[xy] - mu_x mu_y feed
        // back into the mean term.
        let a_term: Vec<f64> = (0..w * h)
            .map(|i| p.d_mu[i] - 2.0 * mu_x[i] * p.d_sxx[i] - mu_y[i] * p.d_sxy[i])
            .collect();
        let ga = blur(&a_term, w, h, &k);
        let gxx = blur(&p.d_sxx, w, h, &k);
        let gxy = blur(&p.d_sxy, w, h, &k);
        for i in 0..w * h {
            grad.data_mut()[i * ch + c] = (ga[i] + 2.0 * x[i] * gxx[i] + y[i] * gxy[i]) / count;
        }
    }
    Ok((total / count, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub l1: f64,
    /// `1 - SSIM`.
    pub ssim_term: f64,
    /// dLoss/dRender.
    pub grad: Image,
}

/// `(1 - lambda) * mean|render - target| + lambda * (1 - SSIM)`.
pub fn l_gs(render: &Image, target: &Image, lambda: f64) -> Result<LossValue> {
    check_rgb_pair(render, target)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::param("lambda must lie in [0, 1]"));
    }
    let n = render.data().len() as f64;
    let mut l1 = 0.0;
    let mut grad = Image::new(render.width(), render.height(), render.channels());
    for ((g, r), t) in grad.data_mut().iter_mut().zip(render.data()).zip(target.data()) {
        let d = r - t;
        l1 += d.abs();
        // sign(0) = 0
        *g = (1.0 - lambda) * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 } / n;
    }
    l1 /= n;
    let mut ssim_term = 0.0;
    if lambda > 0.0 {
        let (s, sg) = ssim_with_grad(render, target)?;
        ssim_term = 1.0 - s;
        for (g, v) in grad.data_mut().iter_mut().zip(sg.data()) {
            *g -= lambda * v;
        }
    }
    Ok(LossValue {
        loss: (1.0 - lambda) * l1 + lambda * ssim_term,
        l1,
        ssim_term,
        grad,
    })
}

/// Loss on an original training view: both images are multiplied by
/// `1 - mask` before [`l_gs`], so pixels under the mask contribute only
/// through the zeroed product.
pub fn l_rec_masked(render: &Image, target: &Image, mask: &Image, lambda: f64) -> Result<LossValue> {
    render.check_same_shape(target)?;
    render.check_mask(mask)?;
    let keep = mask.complement();
    let mut value = l_gs(&render.multiply_by_mask(&keep), &target.multiply_by_mask(&keep), lambda)?;
    value.grad = value.grad.multiply_by_mask(&keep);
    Ok(value)
}
