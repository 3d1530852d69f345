//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix3, Vector3};
use splatinsert::camera::{Camera, Intrinsics};
use splatinsert::scene::{GaussianScene, Splat};

pub const C0: f64 = 0.282_094_791_773_878_14;

pub fn axis_camera(width: usize, height: usize, f: f64) -> Camera {
    let k = Intrinsics {
        fx: f,
        fy: f,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    };
    Camera::new(k, Matrix3::identity(), Vector3::zeros()).unwrap()
}

/// One Gaussian with every parameter in f64, so finite differences can
/// step below f32 resolution.
#[derive(Clone, Debug)]
pub struct ParamSplat {
    pub position: [f64; 3],
    /// Raw (w, x, y, z); normalized on use.
    pub rotation: [f64; 4],
    pub log_scale: [f64; 3],
    pub opacity_logit: f64,
    /// Coefficient-major: `sh[k * 3 + channel]`.
    pub sh: Vec<f64>,
}

impl ParamSplat {
    /// Parameters in the order position, log-scale, rotation, opacity, SH.
    pub fn flat_mut(&mut self) -> Vec<&mut f64> {
        let mut out: Vec<&mut f64> = Vec::new();
        out.extend(self.position.iter_mut());
        out.extend(self.log_scale.iter_mut());
        out.extend(self.rotation.iter_mut());
        out.push(&mut self.opacity_logit);
        out.extend(self.sh.iter_mut());
        out
    }
}

pub fn params_of(scene: &GaussianScene) -> Vec<ParamSplat> {
    (0..scene.len())
        .map(|i| ParamSplat {
            position: scene.positions()[i].map(|v| v as f64),
            rotation: scene.rotations()[i].map(|v| v as f64),
            log_scale: scene.log_scales()[i].map(|v| v as f64),
            opacity_logit: scene.opacity_logits()[i] as f64,
            sh: scene.sh_of(i).iter().map(|&v| v as f64).collect(),
        })
        .collect()
}

/// Real SH basis of degree 0 to 3 for a unit direction, with the usual
/// Gaussian Splatting constants and signs.
fn sh_basis(degree: usize, d: Vector3<f64>) -> Vec<f64> {
    let (x, y, z) = (d.x, d.y, d.z);
    let mut b = vec![C0];
    if degree >= 1 {
        let c1 = 0.488_602_511_902_919_9;
        b.extend([-c1 * y, c1 * z, -c1 * x]);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b.extend([
            1.092_548_430_592_079_2 * x * y,
            -1.092_548_430_592_079_2 * y * z,
            0.315_391_565_252_520_05 * (2.0 * zz - xx - yy),
            -1.092_548_430_592_079_2 * x * z,
            0.546_274_215_296_039_6 * (xx - yy),
        ]);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b.extend([
            -0.590_043_589_926_643_5 * y * (3.0 * xx - yy),
            2.890_611_442_640_554 * x * y * z,
            -0.457_045_799_464_465_8 * y * (4.0 * zz - xx - yy),
            0.373_176_332_590_115_4 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            -0.457_045_799_464_465_8 * x * (4.0 * zz - xx - yy),
            1.445_305_721_320_277 * z * (xx - yy),
            -0.590_043_589_926_643_5 * x * (xx - 3.0 * yy),
        ]);
    }
    b
}

struct Footprint {
    z: f64,
    mean: [f64; 2],
    inv: Matrix2<f64>,
    opacity: f64,
    color: [f64; 3],
}

/// Straight EWA splatting evaluated at every pixel center, sorted by
/// camera depth, with the truncated kernel.
pub fn reference_render(scene: &GaussianScene, cam: &Camera, bg: [f64; 3]) -> (Vec<f64>, Vec<f64>) {
    reference_render_params(&params_of(scene), scene.sh_degree(), cam, bg)
}

pub fn reference_render_params(splats: &[ParamSplat], degree: usize, cam: &Camera, bg: [f64; 3]) -> (Vec<f64>, Vec<f64>) {
    let k = &cam.intrinsics;
    let center = cam.position();
    let mut fps = Vec::new();
    for (i, s) in splats.iter().enumerate() {
        let p = Vector3::from(s.position);
        let t = cam.rotation * p + cam.translation;
        if t.z <= 0.2 {
            continue;
        }
        let [w, x, y, z] = s.rotation;
        let r = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
            .to_rotation_matrix()
            .into_inner();
        let sc = Matrix3::from_diagonal(&Vector3::from(s.log_scale.map(f64::exp)));
        let cov3 = r * sc * sc * r.transpose();
        let j = nalgebra::Matrix2x3::new(
            k.fx / t.z,
            0.0,
            -k.fx * t.x / (t.z * t.z),
            0.0,
            k.fy / t.z,
            -k.fy * t.y / (t.z * t.z),
        );
        let cov2 = j * cam.rotation * cov3 * cam.rotation.transpose() * j.transpose() + Matrix2::identity() * 0.3;
        let basis = sh_basis(degree, (p - center).normalize());
        let color = std::array::from_fn(|c| {
            let v: f64 = basis.iter().enumerate().map(|(kk, b)| b * s.sh[kk * 3 + c]).sum();
            (v + 0.5).clamp(0.0, 1.0)
        });
        fps.push((
            i,
            Footprint {
                z: t.z,
                mean: [k.fx * t.x / t.z + k.cx, k.fy * t.y / t.z + k.cy],
                inv: cov2.try_inverse().unwrap(),
                opacity: 1.0 / (1.0 + (-s.opacity_logit).exp()),
                color,
            },
        ));
    }
    fps.sort_by(|a, b| a.1.z.partial_cmp(&b.1.z).unwrap().then(a.0.cmp(&b.0)));
    let floor = (-4.5f64).exp();
    let (w, h) = (cam.width(), cam.height());
    let mut color = vec![0.0; w * h * 3];
    let mut alpha = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut trans = 1.0;
            let mut acc = [0.0; 3];
            for (_, f) in &fps {
                let d = nalgebra::Vector2::new(x as f64 + 0.5 - f.mean[0], y as f64 + 0.5 - f.mean[1]);
                let m = (d.transpose() * f.inv * d)[0];
                if m >= 9.0 {
                    continue;
                }
                let a = f.opacity * ((-0.5 * m).exp() - floor) / (1.0 - floor);
                for c in 0..3 {
                    acc[c] += f.color[c] * a * trans;
                }
                trans *= 1.0 - a;
            }
            for c in 0..3 {
                color[(y * w + x) * 3 + c] = acc[c] + trans * bg[c];
            }
            alpha[y * w + x] = 1.0 - trans;
        }
    }
    (color, alpha)
}

/// Small deterministic pseudo-random generator so oracles stay free of
/// the crate's own RNG plumbing.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Random anisotropic degree-0 scene in front of an axis camera.
pub fn random_scene(rng: &mut Lcg, n: usize, degree: usize) -> GaussianScene {
    let mut scene = GaussianScene::new(degree);
    for _ in 0..n {
        let mut s = Splat::isotropic(
            [
                rng.range(-0.8, 0.8) as f32,
                rng.range(-0.8, 0.8) as f32,
                rng.range(2.5, 5.0) as f32,
            ],
            0.1,
            rng.range(0.2, 0.9),
            [rng.range(0.2, 0.8), rng.range(0.2, 0.8), rng.range(0.2, 0.8)],
        );
        s.rotation = [
            rng.range(-1.0, 1.0) as f32,
            rng.range(-1.0, 1.0) as f32,
            rng.range(-1.0, 1.0) as f32,
            rng.range(-1.0, 1.0) as f32,
        ];
        s.log_scale = [
            rng.range(-3.0, -1.5) as f32,
            rng.range(-3.0, -1.5) as f32,
            rng.range(-3.0, -1.5) as f32,
        ];
        scene.push(s).unwrap();
    }
    scene
}
