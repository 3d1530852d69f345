use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::density::{density_control, DensifyStats};
use super::loss::{l_gs, l_rec_masked};
use super::{SupervisionSet, TrainConfig};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::ply::{load_ply, save_ply};
use crate::raster::{render_backward, render_fast, RenderGrad};
use crate::scene::{logit, sigmoid, GaussianScene};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-15;
/// Opacity logits are kept within this range so sigmoid never saturates.
const MAX_LOGIT: f32 = 30.0;
const OPACITY_RESET: f64 = 0.01;
const CHECKPOINT_FORMAT: &str = "splatinsert-checkpoint/1";

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub loss: f64,
    pub l1: f64,
    pub ssim_term: f64,
    pub count: usize,
    /// PSNR of the sampled view against its (masked) target.
    pub psnr_probe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    iteration: usize,
    extent: f64,
    config: TrainConfig,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    stats: DensifyStats,
}

fn stream_seed(seed: u64, iteration: usize, stream: u64) -> u64 {
    let mut x = seed ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.rotate_left(32);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stateful optimizer over one scene; can stop, checkpoint and resume with
/// bit-identical results.
pub struct Trainer<'a> {
    config: TrainConfig,
    supervision: &'a SupervisionSet,
    scene: GaussianScene,
    extent: f64,
    iteration: usize,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    stats: DensifyStats,
}

impl<'a> Trainer<'a> {
    pub fn new(initial: GaussianScene, supervision: &'a SupervisionSet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        supervision.validate()?;
        initial.validate()?;
        let extent = config.scene_extent.unwrap_or_else(|| supervision.camera_extent());
        let slots = Self::stride(&initial) * initial.len();
        Ok(Self {
            stats: DensifyStats::new(initial.len()),
            adam_m: vec![0.0; slots],
            adam_v: vec![0.0; slots],
            config,
            supervision,
            scene: initial,
            extent,
            iteration: 0,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::save_checkpoint`].
    /// The configuration must equal the one the checkpoint was made with.
    pub fn resume(ply: impl AsRef<Path>, supervision: &'a SupervisionSet, config: TrainConfig) -> Result<Self> {
        let ply = ply.as_ref();
        let scene = load_ply(ply)?;
        let side_path = ply.with_extension("json");
        let text = fs::read_to_string(&side_path).map_err(|e| Error::io_at(&side_path, e))?;
        let side: Sidecar = serde_json::from_str(&text)?;
        if side.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unknown checkpoint format {:?}", side.format)));
        }
        if side.config != config {
            return Err(Error::param("checkpoint was written with a different training configuration"));
        }
        let slots = Self::stride(&scene) * scene.len();
        if side.adam_m.len() != slots || side.adam_v.len() != slots || side.stats.len() != scene.len() {
            return Err(Error::Format("checkpoint optimizer state does not match the scene".into()));
        }
        let mut t = Self::new(scene, supervision, config)?;
        t.extent = side.extent;
        t.iteration = side.iteration;
        t.adam_m = side.adam_m;
        t.adam_v = side.adam_v;
        t.stats = side.stats;
        Ok(t)
    }

    pub fn save_checkpoint(&self, ply: impl AsRef<Path>) -> Result<()> {
        let ply = ply.as_ref();
        save_ply(&self.scene, ply)?;
        let side = Sidecar {
            format: CHECKPOINT_FORMAT.into(),
            iteration: self.iteration,
            extent: self.extent,
            config: self.config.clone(),
            adam_m: self.adam_m.clone(),
            adam_v: self.adam_v.clone(),
            stats: self.stats.clone(),
        };
        let path = ply.with_extension("json");
        fs::write(&path, serde_json::to_string(&side)?).map_err(|e| Error::io_at(&path, e))
    }

    pub fn scene(&self) -> &GaussianScene {
        &self.scene
    }

    pub fn into_scene(self) -> GaussianScene {
        self.scene
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    fn stride(scene: &GaussianScene) -> usize {
        11 + 3 * scene.sh_coeff_count()
    }

    fn sample_view(&self, iteration: usize) -> (&'a Camera, &'a Image, Option<&'a Image>) {
        let sup = self.supervision;
        let weighted = sup.edited_views.len() * self.config.edited_view_weight;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.config.seed, iteration, 1));
        let k = rng.random_range(0..weighted + sup.training_views.len());
        if k < weighted {
            let v = &sup.edited_views[k / self.config.edited_view_weight];
            (&v.camera, &v.image, None)
        } else {
            let v = &sup.training_views[k - weighted];
            (&v.camera, &v.image, Some(&v.mask))
        }
    }

    fn diverged(&self, message: String, last_good: GaussianScene) -> Error {
        Error::Divergence {
            iteration: self.iteration,
            message,
            checkpoint: Box::new(last_good),
        }
    }

    /// Runs one iteration; returns a log record on logging iterations.
    pub fn step(&mut self) -> Result<Option<LogRecord>> {
        let it = self.iteration;
        let bg = self.config.background;
        let (camera, target, mask) = self.sample_view(it);
        let rendered = render_fast(&self.scene, camera, bg)?.color;
        let value = match mask {
            Some(m) => l_rec_masked(&rendered, target, m, self.config.lambda_ssim)?,
            None => l_gs(&rendered, target, self.config.lambda_ssim)?,
        };
        if !value.loss.is_finite() {
            return Err(self.diverged(format!("loss is {}", value.loss), self.scene.clone()));
        }
        let grad = render_backward(&self.scene, camera, bg, &value.grad)?;
        if !grad.is_finite() {
            return Err(self.diverged("non-finite gradient".into(), self.scene.clone()));
        }
        let mse = match mask {
            Some(m) => {
                let keep = m.complement();
                mse(&rendered.multiply_by_mask(&keep), &target.multiply_by_mask(&keep))
            }
            None => mse(&rendered, target),
        };
        let before = self.scene.clone();
        self.apply_adam(&grad, it);
        if let Err(e) = self.scene.validate() {
            return Err(self.diverged(format!("parameters left the valid range: {e}"), before));
        }

        let step = it + 1;
        let cfg = self.config.clone();
        if step < cfg.densify_until {
            self.stats.accumulate(&grad);
            if step > cfg.densify_from && step % cfg.densify_interval == 0 {
                self.densify(step);
            }
            if let Some(r) = cfg.opacity_reset_interval {
                if step % r == 0 {
                    self.reset_opacity();
                }
            }
        }
        self.iteration = step;
        let log = step % self.config.log_interval == 0 || step == self.config.iterations;
        Ok(log.then(|| LogRecord {
            iter: step,
            loss: value.loss,
            l1: value.l1,
            ssim_term: value.ssim_term,
            count: self.scene.len(),
            psnr_probe: psnr_from_mse(mse),
        }))
    }

    /// Runs until `stop` iterations (capped at the configured total).
    pub fn run_until(&mut self, stop: usize, log: &mut dyn FnMut(&LogRecord) -> Result<()>) -> Result<()> {
        let stop = stop.min(self.config.iterations);
        while self.iteration < stop {
            if let Some(rec) = self.step()? {
                log(&rec)?;
            }
        }
        Ok(())
    }

    pub fn run(&mut self, log: &mut dyn FnMut(&LogRecord) -> Result<()>) -> Result<()> {
        self.run_until(self.config.iterations, log)
    }

    fn apply_adam(&mut self, grad: &RenderGrad, it: usize) {
        let cfg = &self.config;
        let t = (it + 1) as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let stride = Self::stride(&self.scene);
        let k3 = self.scene.sh_coeff_count() * 3;
        let mut lr = vec![0.0; stride];
        lr[0..3].fill(cfg.position_lr(it) * self.extent);
        lr[3..7].fill(cfg.rotation_lr);
        lr[7..10].fill(cfg.scaling_lr);
        lr[10] = cfg.opacity_lr;
        lr[11..14].fill(cfg.feature_lr);
        lr[14..].fill(cfg.feature_lr / 20.0);
        let mut g = vec![0.0; stride];
        let mut p = vec![0.0f64; stride];
        for i in 0..self.scene.len() {
            g[0..3].copy_from_slice(&grad.positions[i]);
            g[3..7].copy_from_slice(&grad.rotations[i]);
            g[7..10].copy_from_slice(&grad.log_scales[i]);
            g[10] = grad.opacity_logits[i];
            g[11..].copy_from_slice(&grad.sh_coeffs[i * k3..(i + 1) * k3]);
            let s = &self.scene;
            for a in 0..3 {
                p[a] = s.positions()[i][a] as f64;
                p[7 + a] = s.log_scales()[i][a] as f64;
            }
            for a in 0..4 {
                p[3 + a] = s.rotations()[i][a] as f64;
            }
            p[10] = s.opacity_logits()[i] as f64;
            for (a, v) in s.sh_of(i).iter().enumerate() {
                p[11 + a] = *v as f64;
            }
            let m = &mut self.adam_m[i * stride..(i + 1) * stride];
            let v = &mut self.adam_v[i * stride..(i + 1) * stride];
            for j in 0..stride {
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                p[j] -= lr[j] / bc1 * m[j] / ((v[j] / bc2).sqrt() + ADAM_EPS);
            }
            let f = |v: f64| v as f32;
            self.scene.set_position(i, [f(p[0]), f(p[1]), f(p[2])]);
            let q = [f(p[3]), f(p[4]), f(p[5]), f(p[6])];
            if q.iter().any(|c| *c != 0.0) && q.iter().all(|c| c.is_finite()) {
                self.scene.set_rotation(i, q);
            }
            self.scene.set_log_scale(i, [f(p[7]), f(p[8]), f(p[9])]);
            self.scene.set_opacity_logit(i, f(p[10]).clamp(-MAX_LOGIT, MAX_LOGIT));
            for (a, c) in self.scene.sh_mut(i).iter_mut().enumerate() {
                *c = f(p[11 + a]);
            }
        }
    }

    fn densify(&mut self, step: usize) {
        let cfg = &self.config;
        let limit = match cfg.opacity_reset_interval {
            Some(r) if step > r => cfg.max_screen_size,
            _ => None,
        };
        let outcome = density_control(
            &self.scene,
            &self.stats,
            cfg,
            self.extent,
            limit,
            stream_seed(cfg.seed, step, 2),
        );
        let stride = Self::stride(&self.scene);
        let mut m = Vec::with_capacity(outcome.sources.len() * stride);
        let mut v = Vec::with_capacity(outcome.sources.len() * stride);
        for src in &outcome.sources {
            match src {
                Some(i) => {
                    m.extend_from_slice(&self.adam_m[i * stride..(i + 1) * stride]);
                    v.extend_from_slice(&self.adam_v[i * stride..(i + 1) * stride]);
                }
                None => {
                    m.extend(std::iter::repeat_n(0.0, stride));
                    v.extend(std::iter::repeat_n(0.0, stride));
                }
            }
        }
        self.adam_m = m;
        self.adam_v = v;
        self.scene = outcome.scene;
        self.stats = DensifyStats::new(self.scene.len());
    }

    fn reset_opacity(&mut self) {
        let cap = logit(OPACITY_RESET) as f32;
        let stride = Self::stride(&self.scene);
        for i in 0..self.scene.len() {
            let v = self.scene.opacity_logits()[i];
            if sigmoid(v as f64) > OPACITY_RESET {
                self.scene.set_opacity_logit(i, cap);
            }
            self.adam_m[i * stride + 10] = 0.0;
            self.adam_v[i * stride + 10] = 0.0;
        }
    }
}

fn mse(a: &Image, b: &Image) -> f64 {
    let n = a.data().len().max(1) as f64;
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    }
}

/// Fine-tunes `initial` on `supervision` for `config.iterations` steps.
pub fn finetune(initial: GaussianScene, supervision: &SupervisionSet, config: TrainConfig) -> Result<GaussianScene> {
    let mut trainer = Trainer::new(initial, supervision, config)?;
    trainer.run(&mut |_| Ok(()))?;
    Ok(trainer.into_scene())
}
