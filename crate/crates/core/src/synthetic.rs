//! Procedural test scene: a small walled room made of flat Gaussians.
//!
//! The room is z-up with the floor at `z = 0` spanning `[-3, 3]^2` and
//! four walls 2.5 high. Surfaces are tiled with thin disk-shaped Gaussians
//! on a jittered grid and colored with smooth patterns, which gives about
//! 2000 Gaussians: enough structure for reconstruction tests while staying
//! fast on a CPU.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Camera, Intrinsics, OrientedBBox};
use crate::error::Result;
use crate::scene::{logit, GaussianScene, Splat};
use crate::sh::rgb_to_dc;

pub const ROOM_HALF_WIDTH: f64 = 3.0;
pub const ROOM_HEIGHT: f64 = 2.5;
const SPACING: f64 = 0.22;
const THICKNESS: f64 = 0.01;

struct Surface {
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    extent_u: f64,
    extent_v: f64,
    color: fn(f64, f64) -> [f64; 3],
}

fn floor_color(u: f64, v: f64) -> [f64; 3] {
    let t = 0.5 + 0.5 * (1.3 * u).sin() * (0.9 * v).cos();
    [0.45 + 0.2 * t, 0.32 + 0.12 * t, 0.22 + 0.06 * t]
}

fn wall_color(base: [f64; 3]) -> impl Fn(f64, f64) -> [f64; 3] {
    move |u, v| {
        let band = 0.5 + 0.5 * (1.7 * u).sin();
        let shade = 0.85 + 0.15 * (v / ROOM_HEIGHT);
        base.map(|c| (c * shade + 0.08 * band).clamp(0.0, 1.0))
    }
}

fn wall_a(u: f64, v: f64) -> [f64; 3] {
    wall_color([0.62, 0.68, 0.75])(u, v)
}

fn wall_b(u: f64, v: f64) -> [f64; 3] {
    wall_color([0.75, 0.64, 0.52])(u, v)
}

fn wall_c(u: f64, v: f64) -> [f64; 3] {
    wall_color([0.52, 0.70, 0.55])(u, v)
}

fn wall_d(u: f64, v: f64) -> [f64; 3] {
    wall_color([0.72, 0.55, 0.62])(u, v)
}

fn surfaces() -> Vec<Surface> {
    let h = ROOM_HALF_WIDTH;
    let w = 2.0 * h;
    let z = Vector3::z();
    vec![
        Surface {
            origin: Vector3::new(-h, -h, 0.0),
            u: Vector3::x(),
            v: Vector3::y(),
            extent_u: w,
            extent_v: w,
            color: floor_color,
        },
        Surface {
            origin: Vector3::new(-h, h, 0.0),
            u: Vector3::x(),
            v: z,
            extent_u: w,
            extent_v: ROOM_HEIGHT,
            color: wall_a,
        },
        Surface {
            origin: Vector3::new(h, -h, 0.0),
            u: Vector3::y(),
            v: z,
            extent_u: w,
            extent_v: ROOM_HEIGHT,
            color: wall_b,
        },
        Surface {
            origin: Vector3::new(-h, -h, 0.0),
            u: Vector3::x(),
            v: z,
            extent_u: w,
            extent_v: ROOM_HEIGHT,
            color: wall_c,
        },
        Surface {
            origin: Vector3::new(-h, -h, 0.0),
            u: Vector3::y(),
            v: z,
            extent_u: w,
            extent_v: ROOM_HEIGHT,
            color: wall_d,
        },
    ]
}

/// The room scene, deterministic in `seed` (which only drives the grid
/// jitter).
pub fn room_scene(seed: u64) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = GaussianScene::new(0);
    let sigma = 0.5 * SPACING;
    for s in surfaces() {
        let n = s.u.cross(&s.v);
        let frame = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[s.u, s.v, n]));
        let q = UnitQuaternion::from_rotation_matrix(&frame);
        let rotation = [q.w as f32, q.i as f32, q.j as f32, q.k as f32];
        let nu = (s.extent_u / SPACING).round() as usize;
        let nv = (s.extent_v / SPACING).round() as usize;
        for a in 0..nu {
            for b in 0..nv {
                let du = (a as f64 + 0.5 + rng.random_range(-0.2..0.2)) * s.extent_u / nu as f64;
                let dv = (b as f64 + 0.5 + rng.random_range(-0.2..0.2)) * s.extent_v / nv as f64;
                let p = s.origin + s.u * du + s.v * dv;
                let rgb = (s.color)(du, dv);
                scene
                    .push(Splat {
                        position: [p.x as f32, p.y as f32, p.z as f32],
                        rotation,
                        log_scale: [sigma.ln() as f32, sigma.ln() as f32, THICKNESS.ln() as f32],
                        opacity_logit: logit(0.9) as f32,
                        sh: vec![rgb.map(|c| rgb_to_dc(c) as f32)],
                    })
                    .expect("room splats are finite");
            }
        }
    }
    scene
}

/// Editing box resting just above the room's floor at its center.
pub fn room_bbox() -> OrientedBBox {
    OrientedBBox::axis_aligned([0.0, 0.0, 0.47], [0.4, 0.4, 0.45]).expect("valid box")
}

/// `count` cameras on a ring around the room center, looking at the box.
pub fn ring_cameras(intrinsics: Intrinsics, count: usize, radius: f64, height: f64) -> Result<Vec<Camera>> {
    let target = room_bbox().center;
    (0..count)
        .map(|k| {
            let a = std::f64::consts::TAU * (k as f64 + 0.25) / count as f64;
            let eye = Vector3::new(radius * a.cos(), radius * a.sin(), height);
            Camera::look_at(intrinsics, eye, target, Vector3::z())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn room_is_about_two_thousand_gaussians() {
        let s = room_scene(0);
        assert!((1800..=2200).contains(&s.len()), "{}", s.len());
        s.validate().unwrap();
        assert_eq!(s, room_scene(0));
    }

    #[test]
    fn box_is_inside_the_room_and_above_the_floor() {
        let b = room_bbox();
        assert!(b.center.z - b.half_extents.z > 0.0);
        assert!(b.center.x.abs() + b.half_extents.x < ROOM_HALF_WIDTH);
    }
}
