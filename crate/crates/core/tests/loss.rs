mod common;

use common::Lcg;
use splatinsert::recon::{l_gs, l_rec_masked, ssim, ssim_with_grad};
use splatinsert::Image;

/// Per-pixel SSIM with an explicit 11x11 Gaussian window (sigma 1.5),
/// zero outside the image, averaged over pixels and channels.
fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let (w, h, ch) = (a.width() as isize, a.height() as isize, a.channels());
    let mut win = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let mut sum = 0.0;
    for c in 0..ch {
        for y in 0..h {
            for x in 0..w {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11isize {
                    for j in 0..11isize {
                        let (yy, xx) = (y + i - 5, x + j - 5);
                        if yy < 0 || xx < 0 || yy >= h || xx >= w {
                            continue;
                        }
                        let g = win[i as usize][j as usize] / total;
                        let va = a.get(xx as usize, yy as usize, c);
                        let vb = b.get(xx as usize, yy as usize, c);
                        ma += g * va;
                        mb += g * vb;
                        aa += g * va * va;
                        bb += g * vb * vb;
                        ab += g * va * vb;
                    }
                }
                let (sa, sb, sab) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                sum += (2.0 * ma * mb + c1) * (2.0 * sab + c2) / ((ma * ma + mb * mb + c1) * (sa + sb + c2));
            }
        }
    }
    sum / (w * h) as f64 / ch as f64
}

fn random_image(rng: &mut Lcg, w: usize, h: usize) -> Image {
    Image::from_data(w, h, 3, (0..w * h * 3).map(|_| rng.next_f64()).collect()).unwrap()
}

#[test]
fn ssim_matches_the_windowed_oracle() {
    let mut rng = Lcg(3);
    for (w, h) in [(8, 8), (13, 9), (30, 17)] {
        let a = random_image(&mut rng, w, h);
        let b = random_image(&mut rng, w, h);
        assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-12);
    }
    let black = Image::new(16, 16, 3);
    let white = Image::rgb(16, 16, [1.0; 3]);
    let s = ssim(&black, &white).unwrap();
    assert!((s - naive_ssim(&black, &white)).abs() < 1e-12);
    assert!(s > 0.0 && s < 1e-3, "{s}");
}

#[test]
fn ssim_is_symmetric_and_one_on_itself() {
    let mut rng = Lcg(4);
    let a = random_image(&mut rng, 12, 10);
    let b = random_image(&mut rng, 12, 10);
    assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
}

/// Render and target differing by at least 0.05 everywhere, so L1 has no
/// kink within the finite-difference step.
fn separated_pair(rng: &mut Lcg) -> (Image, Image) {
    let render = random_image(rng, 8, 8);
    let target = Image::from_data(
        8,
        8,
        3,
        render
            .data()
            .iter()
            .map(|&r| {
                let d = rng.range(0.05, 0.4);
                if r > 0.5 { r - d } else { r + d }
            })
            .collect(),
    )
    .unwrap();
    (render, target)
}

#[test]
fn loss_gradient_matches_central_differences() {
    let mut rng = Lcg(8);
    for lambda in [0.0, 0.2, 1.0] {
        let (render, target) = separated_pair(&mut rng);
        let grad = l_gs(&render, &target, lambda).unwrap().grad;
        let eps = 1e-6;
        for i in 0..render.data().len() {
            let mut p = render.clone();
            p.data_mut()[i] += eps;
            let mut m = render.clone();
            m.data_mut()[i] -= eps;
            let fd = (l_gs(&p, &target, lambda).unwrap().loss - l_gs(&m, &target, lambda).unwrap().loss) / (2.0 * eps);
            let a = grad.data()[i];
            assert!((a - fd).abs() <= 1e-3 * a.abs().max(fd.abs()) + 1e-9, "lambda {lambda} index {i}: {a} vs {fd}");
        }
    }
}

#[test]
fn ssim_gradient_matches_central_differences() {
    let mut rng = Lcg(9);
    let a = random_image(&mut rng, 8, 8);
    let b = random_image(&mut rng, 8, 8);
    let (_, grad) = ssim_with_grad(&a, &b).unwrap();
    let eps = 1e-6;
    for i in 0..a.data().len() {
        let mut p = a.clone();
        p.data_mut()[i] += eps;
        let mut m = a.clone();
        m.data_mut()[i] -= eps;
        let fd = (naive_ssim(&p, &b) - naive_ssim(&m, &b)) / (2.0 * eps);
        assert!((grad.data()[i] - fd).abs() <= 1e-3 * fd.abs().max(1e-6), "{i}: {} vs {fd}", grad.data()[i]);
    }
}

#[test]
fn loss_reduces_to_l1_and_vanishes_on_equal_images() {
    let mut rng = Lcg(10);
    let a = random_image(&mut rng, 9, 7);
    let b = random_image(&mut rng, 9, 7);
    let l1: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64;
    assert!((l_gs(&a, &b, 0.0).unwrap().loss - l1).abs() < 1e-15);
    assert_eq!(l_gs(&Image::new(5, 5, 3), &Image::rgb(5, 5, [1.0; 3]), 0.0).unwrap().loss, 1.0);
    assert!(l_gs(&a, &a, 0.2).unwrap().loss.abs() < 1e-12);
}

#[test]
fn masked_loss_ignores_pixels_under_the_mask() {
    let mut rng = Lcg(11);
    let (render, target) = separated_pair(&mut rng);
    let mut mask = Image::new(8, 8, 1);
    for y in 2..6 {
        for x in 3..7 {
            mask.set(x, y, 0, 1.0);
        }
    }
    let v = l_rec_masked(&render, &target, &mask, 0.2).unwrap();
    for y in 0..8 {
        for x in 0..8 {
            for c in 0..3 {
                if mask.get(x, y, 0) == 1.0 {
                    assert_eq!(v.grad.get(x, y, c), 0.0);
                }
            }
        }
    }
    // Changing the render under the mask changes nothing.
    let mut other = render.clone();
    for y in 2..6 {
        for x in 3..7 {
            other.set(x, y, 1, 0.0);
        }
    }
    assert_eq!(l_rec_masked(&other, &target, &mask, 0.2).unwrap().loss, v.loss);
    let zeros = Image::new(8, 8, 1);
    assert_eq!(l_rec_masked(&render, &target, &zeros, 0.2).unwrap(), l_gs(&render, &target, 0.2).unwrap());
}
