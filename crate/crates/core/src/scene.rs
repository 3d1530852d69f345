//! Gaussian scene parameterization.
//!
//! Parameters are stored exactly as the reference exporter writes them:
//! `f32` positions, `(w, x, y, z)` rotations, log standard deviations,
//! opacity logits and spherical-harmonic coefficients. All arithmetic on
//! them (rendering, gradients) happens in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh;

/// Quaternions whose norm is within this of one are left untouched, so
/// repeated normalization never perturbs stored bits.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-6;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Parameters of a single Gaussian, used to build and inspect scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat {
    pub position: [f32; 3],
    /// Unit quaternion, `(w, x, y, z)`.
    pub rotation: [f32; 4],
    pub log_scale: [f32; 3],
    pub opacity_logit: f32,
    /// `coeff_count(degree)` RGB triples, degree-0 term first.
    pub sh: Vec<[f32; 3]>,
}

impl Splat {
    /// Isotropic flat-colored splat.
    pub fn isotropic(position: [f32; 3], sigma: f32, opacity: f64, rgb: [f64; 3]) -> Self {
        Self {
            position,
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: [sigma.ln(); 3],
            opacity_logit: logit(opacity) as f32,
            sh: vec![rgb.map(|c| sh::rgb_to_dc(c) as f32)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    sh_degree: usize,
    pub(crate) positions: Vec<[f32; 3]>,
    pub(crate) rotations: Vec<[f32; 4]>,
    pub(crate) log_scales: Vec<[f32; 3]>,
    pub(crate) opacity_logits: Vec<f32>,
    /// Flat, `[gaussian][coefficient][channel]`.
    pub(crate) sh_coeffs: Vec<f32>,
}

impl Default for GaussianScene {
    fn default() -> Self {
        Self::new(0)
    }
}

impl GaussianScene {
    pub fn new(sh_degree: usize) -> Self {
        assert!(sh_degree <= sh::MAX_SH_DEGREE, "sh degree {sh_degree} > 3");
        Self {
            sh_degree,
            positions: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            opacity_logits: Vec::new(),
            sh_coeffs: Vec::new(),
        }
    }

    /// Builds a scene from raw arrays, checking every invariant.
    pub fn from_parts(
        sh_degree: usize,
        positions: Vec<[f32; 3]>,
        rotations: Vec<[f32; 4]>,
        log_scales: Vec<[f32; 3]>,
        opacity_logits: Vec<f32>,
        sh_coeffs: Vec<f32>,
    ) -> Result<Self> {
        if sh_degree > sh::MAX_SH_DEGREE {
            return Err(Error::param(format!("sh degree {sh_degree} exceeds 3")));
        }
        let n = positions.len();
        let k = sh::coeff_count(sh_degree) * 3;
        if rotations.len() != n
            || log_scales.len() != n
            || opacity_logits.len() != n
            || sh_coeffs.len() != n * k
        {
            return Err(Error::param("per-Gaussian arrays differ in length"));
        }
        let mut scene = Self {
            sh_degree,
            positions,
            rotations,
            log_scales,
            opacity_logits,
            sh_coeffs,
        };
        for i in 0..n {
            scene.rotations[i] = normalize_quat(scene.rotations[i])
                .ok_or_else(|| Error::Data {
                    index: i,
                    message: "zero-norm rotation".into(),
                })?;
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn sh_degree(&self) -> usize {
        self.sh_degree
    }

    /// Coefficients per Gaussian per channel.
    pub fn sh_coeff_count(&self) -> usize {
        sh::coeff_count(self.sh_degree)
    }

    pub fn positions(&self) -> &[[f32; 3]] {
        &self.positions
    }

    pub fn rotations(&self) -> &[[f32; 4]] {
        &self.rotations
    }

    pub fn log_scales(&self) -> &[[f32; 3]] {
        &self.log_scales
    }

    pub fn opacity_logits(&self) -> &[f32] {
        &self.opacity_logits
    }

    pub fn sh_coeffs(&self) -> &[f32] {
        &self.sh_coeffs
    }

    /// SH coefficients of Gaussian `i`, `[coefficient][channel]` flattened.
    pub fn sh_of(&self, i: usize) -> &[f32] {
        let k = self.sh_coeff_count() * 3;
        &self.sh_coeffs[i * k..(i + 1) * k]
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i] as f64)
    }

    pub fn scale(&self, i: usize) -> [f64; 3] {
        self.log_scales[i].map(|s| (s as f64).exp())
    }

    /// Flat color from the degree-0 term, clamped to `[0, 1]`.
    pub fn base_color(&self, i: usize) -> [f64; 3] {
        let sh = self.sh_of(i);
        [0, 1, 2].map(|c| sh::dc_to_rgb(sh[c] as f64).clamp(0.0, 1.0))
    }

    pub fn splat(&self, i: usize) -> Splat {
        Splat {
            position: self.positions[i],
            rotation: self.rotations[i],
            log_scale: self.log_scales[i],
            opacity_logit: self.opacity_logits[i],
            sh: self.sh_of(i).chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }
    }

    /// Appends a Gaussian. SH terms beyond those supplied are zero; extra
    /// terms beyond the scene degree are an error.
    pub fn push(&mut self, splat: Splat) -> Result<()> {
        let k = self.sh_coeff_count();
        if splat.sh.is_empty() || splat.sh.len() > k {
            return Err(Error::param(format!(
                "splat has {} SH terms, scene expects 1..={k}",
                splat.sh.len()
            )));
        }
        let index = self.len();
        let rotation = normalize_quat(splat.rotation).ok_or_else(|| Error::Data {
            index,
            message: "zero-norm rotation".into(),
        })?;
        let finite = splat.position.iter().all(|v| v.is_finite())
            && splat.log_scale.iter().all(|v| v.is_finite())
            && splat.opacity_logit.is_finite()
            && splat.sh.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data {
                index,
                message: "non-finite parameter".into(),
            });
        }
        self.positions.push(splat.position);
        self.rotations.push(rotation);
        self.log_scales.push(splat.log_scale);
        self.opacity_logits.push(splat.opacity_logit);
        for t in 0..k {
            self.sh_coeffs
                .extend_from_slice(splat.sh.get(t).unwrap_or(&[0.0; 3]));
        }
        Ok(())
    }

    pub fn set_position(&mut self, i: usize, p: [f32; 3]) {
        self.positions[i] = p;
    }

    /// Stores the normalized quaternion. Panics on a zero quaternion.
    pub fn set_rotation(&mut self, i: usize, q: [f32; 4]) {
        self.rotations[i] = normalize_quat(q).expect("zero-norm rotation");
    }

    pub fn set_log_scale(&mut self, i: usize, s: [f32; 3]) {
        self.log_scales[i] = s;
    }

    pub fn set_opacity_logit(&mut self, i: usize, v: f32) {
        self.opacity_logits[i] = v;
    }

    pub fn sh_mut(&mut self, i: usize) -> &mut [f32] {
        let k = self.sh_coeff_count() * 3;
        &mut self.sh_coeffs[i * k..(i + 1) * k]
    }

    /// Raises the SH degree, zero-filling the new coefficients.
    pub fn with_sh_degree(&self, degree: usize) -> Self {
        assert!(degree >= self.sh_degree && degree <= sh::MAX_SH_DEGREE);
        let old_k = self.sh_coeff_count() * 3;
        let new_k = sh::coeff_count(degree) * 3;
        let mut coeffs = Vec::with_capacity(self.len() * new_k);
        for chunk in self.sh_coeffs.chunks(old_k.max(1)).take(self.len()) {
            coeffs.extend_from_slice(chunk);
            coeffs.resize(coeffs.len() + new_k - old_k, 0.0);
        }
        Self {
            sh_degree: degree,
            sh_coeffs: coeffs,
            ..self.clone()
        }
    }

    /// Union of two scenes; the result has the larger SH degree.
    pub fn merged(&self, other: &GaussianScene) -> Self {
        let degree = self.sh_degree.max(other.sh_degree);
        let mut a = self.with_sh_degree(degree);
        let b = other.with_sh_degree(degree);
        a.positions.extend_from_slice(&b.positions);
        a.rotations.extend_from_slice(&b.rotations);
        a.log_scales.extend_from_slice(&b.log_scales);
        a.opacity_logits.extend_from_slice(&b.opacity_logits);
        a.sh_coeffs.extend_from_slice(&b.sh_coeffs);
        a
    }

    /// Keeps the Gaussians at `indices`, in that order (repeats allowed).
    pub fn gather(&self, indices: &[usize]) -> Self {
        let k = self.sh_coeff_count() * 3;
        let mut out = GaussianScene::new(self.sh_degree);
        for &i in indices {
            out.positions.push(self.positions[i]);
            out.rotations.push(self.rotations[i]);
            out.log_scales.push(self.log_scales[i]);
            out.opacity_logits.push(self.opacity_logits[i]);
            out.sh_coeffs
                .extend_from_slice(&self.sh_coeffs[i * k..(i + 1) * k]);
        }
        out
    }

    /// Checks every invariant; the error names the first offending index.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let k = self.sh_coeff_count() * 3;
        if self.rotations.len() != n
            || self.log_scales.len() != n
            || self.opacity_logits.len() != n
            || self.sh_coeffs.len() != n * k
        {
            return Err(Error::param("per-Gaussian arrays differ in length"));
        }
        for i in 0..n {
            let finite = self.positions[i].iter().all(|v| v.is_finite())
                && self.rotations[i].iter().all(|v| v.is_finite())
                && self.log_scales[i].iter().all(|v| v.is_finite())
                && self.opacity_logits[i].is_finite()
                && self.sh_of(i).iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Data {
                    index: i,
                    message: "non-finite parameter".into(),
                });
            }
            if (quat_norm(self.rotations[i]) - 1.0).abs() > QUAT_NORM_TOLERANCE {
                return Err(Error::Data {
                    index: i,
                    message: "rotation is not a unit quaternion".into(),
                });
            }
            let a = self.opacity(i);
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Data {
                    index: i,
                    message: format!("opacity {a} saturates"),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn quat_norm(q: [f32; 4]) -> f64 {
    q.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

/// Unit quaternion, or `None` for a zero (or non-finite) input. Inputs
/// already within [`QUAT_NORM_TOLERANCE`] are returned bit-for-bit.
pub fn normalize_quat(q: [f32; 4]) -> Option<[f32; 4]> {
    let n = quat_norm(q);
    if !n.is_finite() || n == 0.0 {
        return None;
    }
    if (n - 1.0).abs() <= QUAT_NORM_TOLERANCE {
        return Some(q);
    }
    Some(q.map(|v| (v as f64 / n) as f32))
}

/// Points and colors shown to a user placing the editing box.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloudSample {
    pub points: Vec<[f32; 3]>,
    pub colors: Vec<[f32; 3]>,
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    position: [f32; 3],
    color: [f32; 3],
}

impl PointCloudSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// JSON array of `{"position": [x,y,z], "color": [r,g,b]}`.
    pub fn to_json(&self) -> Result<String> {
        let records: Vec<PointRecord> = self
            .points
            .iter()
            .zip(&self.colors)
            .map(|(&position, &color)| PointRecord { position, color })
            .collect();
        Ok(serde_json::to_string(&records)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<PointRecord> = serde_json::from_str(text)?;
        Ok(Self {
            points: records.iter().map(|r| r.position).collect(),
            colors: records.iter().map(|r| r.color).collect(),
        })
    }
}

/// Gaussian centers with their flat colors, subsampled by a uniform
/// stride: point `k` is Gaussian `floor(k * count / max_points)`.
pub fn sample_point_cloud(scene: &GaussianScene, max_points: usize) -> PointCloudSample {
    let max_points = max_points.max(1);
    let n = scene.len();
    let take = n.min(max_points);
    let mut out = PointCloudSample::default();
    for k in 0..take {
        let i = k * n / take;
        out.points.push(scene.positions[i]);
        out.colors.push(scene.base_color(i).map(|c| c as f32));
    }
    out
}
