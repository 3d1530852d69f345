//! EWA projection of 3D Gaussians to screen-space footprints, and the
//! reverse-mode chain from footprint gradients back to scene parameters.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::{COVARIANCE_BLUR, FOOTPRINT_SIGMAS, NEAR_PLANE};
use crate::camera::Camera;
use crate::scene::{sigmoid, GaussianScene};
use crate::sh;

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone)]
pub(crate) struct Projected {
    pub index: usize,
    /// Camera-space z of the center.
    pub depth: f64,
    pub mean: [f64; 2],
    /// Inverse 2D covariance `[a, b, c]` for `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    /// Half-widths of the footprint's bounding box, in pixels.
    pub extent: [f64; 2],
    pub opacity: f64,
    pub color: [f64; 3],
    /// Channels whose SH color fell outside [0, 1] and was clamped.
    pub clamped: [bool; 3],
}

/// Camera quantities shared by every Gaussian.
pub(crate) struct View {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub center: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl View {
    pub fn new(camera: &Camera) -> Self {
        let k = camera.intrinsics;
        Self {
            rotation: camera.rotation,
            translation: camera.translation,
            center: camera.position(),
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

pub(crate) fn quat_to_matrix(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Intermediate values of one projection, kept for the backward pass.
struct Forward {
    t: Vector3<f64>,
    q_raw: [f64; 4],
    q_norm: f64,
    rot: Matrix3<f64>,
    scale: Vector3<f64>,
    m: Matrix3<f64>,
    sigma: Matrix3<f64>,
    tw: Matrix2x3<f64>,
    cov2: Matrix2<f64>,
    dir: Vector3<f64>,
    dir_len: f64,
    basis: [f64; 16],
    basis_grad: [[f64; 3]; 16],
}

fn forward(scene: &GaussianScene, i: usize, view: &View) -> Option<Forward> {
    let p = Vector3::from(scene.positions[i].map(|v| v as f64));
    let t = view.rotation * p + view.translation;
    if t.z <= NEAR_PLANE {
        return None;
    }
    let q_raw = scene.rotations[i].map(|v| v as f64);
    let q_norm = q_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q_raw.map(|v| v / q_norm);
    let rot = quat_to_matrix(w, x, y, z);
    let scale = Vector3::from(scene.log_scales[i].map(|s| (s as f64).exp()));
    let m = rot * Matrix3::from_diagonal(&scale);
    let sigma = m * m.transpose();
    let (iz, iz2) = (1.0 / t.z, 1.0 / (t.z * t.z));
    let jac = Matrix2x3::new(
        view.fx * iz,
        0.0,
        -view.fx * t.x * iz2,
        0.0,
        view.fy * iz,
        -view.fy * t.y * iz2,
    );
    let tw = jac * view.rotation;
    let cov2 = tw * sigma * tw.transpose() + Matrix2::identity() * COVARIANCE_BLUR;
    let v = p - view.center;
    let dir_len = v.norm();
    let dir = if dir_len > 0.0 { v / dir_len } else { Vector3::z() };
    let (basis, basis_grad) = sh::basis(scene.sh_degree(), dir.into());
    Some(Forward {
        t,
        q_raw,
        q_norm,
        rot,
        scale,
        m,
        sigma,
        tw,
        cov2,
        dir,
        dir_len,
        basis,
        basis_grad,
    })
}

/// Footprint of Gaussian `i`, or `None` if it is behind the near plane,
/// degenerate, or touches no pixel center.
pub(crate) fn project(scene: &GaussianScene, i: usize, view: &View) -> Option<Projected> {
    let f = forward(scene, i, view)?;
    let (a, b, c) = (f.cov2[(0, 0)], f.cov2[(0, 1)], f.cov2[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let mean = [
        view.fx * f.t.x / f.t.z + view.cx,
        view.fy * f.t.y / f.t.z + view.cy,
    ];
    let extent = [FOOTPRINT_SIGMAS * a.sqrt(), FOOTPRINT_SIGMAS * c.sqrt()];
    // Pixel centers sit at integer + 0.5.
    let (w, h) = (view.width as f64, view.height as f64);
    if mean[0] + extent[0] < 0.5
        || mean[0] - extent[0] > w - 0.5
        || mean[1] + extent[1] < 0.5
        || mean[1] - extent[1] > h - 0.5
    {
        return None;
    }
    let coeffs = scene.sh_of(i);
    let k = scene.sh_coeff_count();
    let mut color = [0.0; 3];
    let mut clamped = [false; 3];
    for ch in 0..3 {
        let raw: f64 = (0..k).map(|t| f.basis[t] * coeffs[t * 3 + ch] as f64).sum::<f64>() + 0.5;
        clamped[ch] = !(0.0..=1.0).contains(&raw);
        color[ch] = raw.clamp(0.0, 1.0);
    }
    Some(Projected {
        index: i,
        depth: f.t.z,
        mean,
        conic: [c / det, -b / det, a / det],
        extent,
        opacity: sigmoid(scene.opacity_logits[i] as f64),
        color,
        clamped,
    })
}

/// Screen-space gradient sums for one Gaussian, accumulated over pixels.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct FootprintGrad {
    pub mean: [f64; 2],
    /// dL/dQ for the full symmetric conic matrix: `[xx, xy, yy]`, where the
    /// off-diagonal entry is the gradient of each of the two equal entries.
    pub conic: [f64; 3],
    /// Sum of dL/d(alpha) * kernel, i.e. dL/d(opacity).
    pub opacity: f64,
    pub color: [f64; 3],
}

impl FootprintGrad {
    pub fn add(&mut self, o: &FootprintGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// Parameter gradients of one Gaussian.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ParamGrad {
    pub position: [f64; 3],
    pub rotation: [f64; 4],
    pub log_scale: [f64; 3],
    pub opacity_logit: f64,
}

/// Chains footprint gradients back to the Gaussian's parameters. SH
/// gradients are written into `sh_out` (`[coefficient][channel]`).
pub(crate) fn backward(
    scene: &GaussianScene,
    proj: &Projected,
    view: &View,
    g: &FootprintGrad,
    sh_out: &mut [f64],
) -> ParamGrad {
    let i = proj.index;
    let f = forward(scene, i, view).expect("projected Gaussian must re-project");
    let mut d_p = Vector3::zeros();

    // Opacity: alpha = sigmoid(logit) * kernel.
    let o = proj.opacity;
    let opacity_logit = g.opacity * o * (1.0 - o);

    // Color through SH, including the view-direction dependence.
    let k = scene.sh_coeff_count();
    let coeffs = scene.sh_of(i);
    let mut d_dir = Vector3::zeros();
    for ch in 0..3 {
        if proj.clamped[ch] {
            continue;
        }
        let gc = g.color[ch];
        for t in 0..k {
            sh_out[t * 3 + ch] = gc * f.basis[t];
            if t > 0 {
                let w = gc * coeffs[t * 3 + ch] as f64;
                d_dir += Vector3::from(f.basis_grad[t]) * w;
            }
        }
    }
    if k > 1 && f.dir_len > 0.0 {
        d_p += (d_dir - f.dir * f.dir.dot(&d_dir)) / f.dir_len;
    }

    // Conic = cov2^-1  =>  dL/dcov2 = -Q G Q.
    let q = Matrix2::new(proj.conic[0], proj.conic[1], proj.conic[1], proj.conic[2]);
    let gq = Matrix2::new(g.conic[0], g.conic[1], g.conic[1], g.conic[2]);
    let g_cov2 = -(q * gq * q);
    debug_assert!((f.cov2 * q - Matrix2::identity()).abs().max() < 1e-6);

    // cov2 = T Sigma T^T + blur, T = J W.
    let g_sigma = f.tw.transpose() * g_cov2 * f.tw;
    let g_tw = 2.0 * g_cov2 * f.tw * f.sigma;
    let g_jac = g_tw * view.rotation.transpose();

    // Mean and Jacobian depend on the camera-space center t.
    let (tx, ty, tz) = (f.t.x, f.t.y, f.t.z);
    let (iz, iz2, iz3) = (1.0 / tz, 1.0 / (tz * tz), 1.0 / (tz * tz * tz));
    let (fx, fy) = (view.fx, view.fy);
    let gm = Vector2::new(g.mean[0], g.mean[1]);
    let mut d_t = Vector3::new(
        gm.x * fx * iz,
        gm.y * fy * iz,
        -gm.x * fx * tx * iz2 - gm.y * fy * ty * iz2,
    );
    d_t.x += g_jac[(0, 2)] * (-fx * iz2);
    d_t.y += g_jac[(1, 2)] * (-fy * iz2);
    d_t.z += g_jac[(0, 0)] * (-fx * iz2)
        + g_jac[(0, 2)] * (2.0 * fx * tx * iz3)
        + g_jac[(1, 1)] * (-fy * iz2)
        + g_jac[(1, 2)] * (2.0 * fy * ty * iz3);
    d_p += view.rotation.transpose() * d_t;

    // Sigma = M M^T, M = R diag(s).
    let g_m = 2.0 * g_sigma * f.m;
    let mut log_scale = [0.0; 3];
    let mut g_r = Matrix3::zeros();
    for col in 0..3 {
        let mut ds = 0.0;
        for row in 0..3 {
            ds += g_m[(row, col)] * f.rot[(row, col)];
            g_r[(row, col)] = g_m[(row, col)] * f.scale[col];
        }
        log_scale[col] = ds * f.scale[col];
    }

    // Rotation matrix from the normalized quaternion.
    let [w, x, y, z] = f.q_raw.map(|v| v / f.q_norm);
    let gr = |r: usize, c: usize| g_r[(r, c)];
    let dq = [
        2.0 * (-z * gr(0, 1) + y * gr(0, 2) + z * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0)
            + x * gr(2, 1)),
        2.0 * (y * gr(0, 1) + z * gr(0, 2) + y * gr(1, 0) - 2.0 * x * gr(1, 1) - w * gr(1, 2)
            + z * gr(2, 0)
            + w * gr(2, 1)
            - 2.0 * x * gr(2, 2)),
        2.0 * (-2.0 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + z * gr(1, 2)
            - w * gr(2, 0)
            + z * gr(2, 1)
            - 2.0 * y * gr(2, 2)),
        2.0 * (-2.0 * z * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0)
            - 2.0 * z * gr(1, 1)
            + y * gr(1, 2)
            + x * gr(2, 0)
            + y * gr(2, 1)),
    ];
    let qn = [w, x, y, z];
    let dot: f64 = (0..4).map(|k| qn[k] * dq[k]).sum();
    let rotation = std::array::from_fn(|k| (dq[k] - qn[k] * dot) / f.q_norm);

    ParamGrad {
        position: d_p.into(),
        rotation,
        log_scale,
        opacity_logit,
    }
}
