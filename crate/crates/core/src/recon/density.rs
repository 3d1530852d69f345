//! Adaptive density control: clone, split and prune.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::raster::RenderGrad;
use crate::scene::{sigmoid, GaussianScene};

/// Children per split Gaussian.
pub const SPLIT_COUNT: usize = 2;

/// Screen-space statistics gathered between densification steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensifyStats {
    pub grad_accum: Vec<f64>,
    pub denom: Vec<f64>,
    pub max_radii: Vec<f64>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_accum: vec![0.0; n],
            denom: vec![0.0; n],
            max_radii: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.denom.is_empty()
    }

    /// Adds one view's gradients; only Gaussians drawn in it count.
    pub fn accumulate(&mut self, grad: &RenderGrad) {
        for i in 0..self.len() {
            if grad.radii[i] > 0.0 {
                self.grad_accum[i] += grad.screen_grad_norms[i];
                self.denom[i] += 1.0;
                self.max_radii[i] = self.max_radii[i].max(grad.radii[i]);
            }
        }
    }

    pub fn average_grads(&self) -> Vec<f64> {
        self.grad_accum
            .iter()
            .zip(&self.denom)
            .map(|(g, d)| if *d > 0.0 { g / d } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyOutcome {
    pub scene: GaussianScene,
    /// For each output Gaussian, the input Gaussian whose optimizer state it
    /// keeps; `None` for newly created ones.
    pub sources: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// One round of density control.
///
/// Gaussians whose averaged gradient reaches the threshold are cloned when
/// their largest scale is at most `percent_dense * extent` and otherwise
/// split into two children sampled from the parent, with scales divided by
/// 1.6. Then Gaussians with opacity below the prune threshold are removed,
/// plus, when `screen_limit` is set, those whose screen radius exceeded it
/// or whose world size exceeds a tenth of the extent.
pub fn density_control(
    scene: &GaussianScene,
    stats: &DensifyStats,
    config: &TrainConfig,
    extent: f64,
    screen_limit: Option<f64>,
    seed: u64,
) -> DensifyOutcome {
    let n = scene.len();
    assert_eq!(stats.len(), n, "statistics do not match the scene");
    let grads = stats.average_grads();
    let size_limit = config.percent_dense * extent;
    let max_scale = |i: usize| scene.scale(i).into_iter().fold(f64::MIN, f64::max);
    let hot = |i: usize| grads[i] >= config.densify_grad_threshold;

    let mut out = GaussianScene::new(scene.sh_degree());
    let mut sources = Vec::new();
    let mut radii = Vec::new();
    let (mut cloned, mut split) = (0, 0);
    // Survivors first, then clones, then split children.
    let mut splitting = Vec::new();
    for i in 0..n {
        if hot(i) && max_scale(i) > size_limit {
            splitting.push(i);
            split += 1;
        } else {
            out.push(scene.splat(i)).expect("scene splats are valid");
            sources.push(Some(i));
            radii.push(stats.max_radii[i]);
        }
    }
    for i in 0..n {
        if hot(i) && max_scale(i) <= size_limit {
            out.push(scene.splat(i)).expect("scene splats are valid");
            sources.push(None);
            radii.push(0.0);
            cloned += 1;
        }
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &i in &splitting {
        let parent = scene.splat(i);
        let q = parent.rotation.map(|v| v as f64);
        let rot = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        let s = scene.scale(i);
        let p = Vector3::from(parent.position.map(|v| v as f64));
        for _ in 0..SPLIT_COUNT {
            let local = Vector3::new(
                normal.sample(&mut rng) * s[0],
                normal.sample(&mut rng) * s[1],
                normal.sample(&mut rng) * s[2],
            );
            let c = p + rot * local;
            let mut child = parent.clone();
            child.position = [c.x as f32, c.y as f32, c.z as f32];
            child.log_scale = s.map(|v| (v / (0.8 * SPLIT_COUNT as f64)).ln() as f32);
            out.push(child).expect("split children are finite");
            sources.push(None);
            radii.push(0.0);
        }
    }

    let keep: Vec<usize> = (0..out.len())
        .filter(|&j| {
            if sigmoid(out.opacity_logits()[j] as f64) < config.opacity_prune_threshold {
                return false;
            }
            if let Some(limit) = screen_limit {
                let world = out.scale(j).into_iter().fold(f64::MIN, f64::max);
                if radii[j] > limit || world > 0.1 * extent {
                    return false;
                }
            }
            true
        })
        .collect();
    let pruned = out.len() - keep.len();
    let sources = keep.iter().map(|&j| sources[j]).collect();
    DensifyOutcome {
        scene: out.gather(&keep),
        sources,
        cloned,
        split,
        pruned,
    }
}
