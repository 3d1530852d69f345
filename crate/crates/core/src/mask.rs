//! Editing masks: the screen-space footprint of the oriented box.
//!
//! The box is clipped against a near plane, its remaining vertices are
//! projected, and the convex hull of the projections is rasterized. A pixel
//! is set when its unit square overlaps the hull, so every point of the box
//! that is in view lands on a set pixel.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, OrientedBBox};
use crate::image::Image;

/// Camera-space depth below which box geometry is clipped.
pub const MASK_NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Convex hull of the projected box.
    #[default]
    Hull,
    /// Axis-aligned bounding rectangle of the hull.
    Rectangle,
}

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Image-plane vertices of the box clipped to `z >= MASK_NEAR_PLANE`.
pub fn clipped_projection(bbox: &OrientedBBox, camera: &Camera) -> Vec<[f64; 2]> {
    let corners: Vec<Vector3<f64>> = bbox
        .corners()
        .iter()
        .map(|c| camera.world_to_camera(c))
        .collect();
    let mut pts = Vec::with_capacity(20);
    for c in &corners {
        if c.z >= MASK_NEAR_PLANE {
            pts.push(camera.project_camera_point(c));
        }
    }
    for &(a, b) in &EDGES {
        let (pa, pb) = (&corners[a], &corners[b]);
        if (pa.z < MASK_NEAR_PLANE) != (pb.z < MASK_NEAR_PLANE) {
            let t = (MASK_NEAR_PLANE - pa.z) / (pb.z - pa.z);
            let p = pa + (pb - pa) * t;
            pts.push(camera.project_camera_point(&Vector3::new(p.x, p.y, MASK_NEAR_PLANE)));
        }
    }
    pts
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Separating-axis test between a convex CCW polygon and an axis-aligned
/// square `[x0, x0+1] x [y0, y0+1]`.
fn polygon_overlaps_square(hull: &[[f64; 2]], x0: f64, y0: f64) -> bool {
    let square = [[x0, y0], [x0 + 1.0, y0], [x0 + 1.0, y0 + 1.0], [x0, y0 + 1.0]];
    let n = hull.len();
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        // Outward normal of a CCW edge (image y axis points down, but the
        // orientation test is consistent with `cross`).
        if square.iter().all(|&s| cross(a, b, s) < 0.0) {
            return false;
        }
    }
    true
}

fn empty_mask(camera: &Camera) -> Image {
    Image::new(camera.width(), camera.height(), 1)
}

/// Binary editing mask of `bbox` seen from `camera`.
pub fn project_bbox_mask(bbox: &OrientedBBox, camera: &Camera) -> Image {
    project_bbox_mask_with(bbox, camera, MaskMode::Hull)
}

pub fn project_bbox_mask_with(bbox: &OrientedBBox, camera: &Camera, mode: MaskMode) -> Image {
    let hull = convex_hull(clipped_projection(bbox, camera));
    let mut mask = empty_mask(camera);
    if hull.len() < 3 {
        return mask;
    }
    let (w, h) = (camera.width() as f64, camera.height() as f64);
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &hull {
        lo_x = lo_x.min(p[0]);
        lo_y = lo_y.min(p[1]);
        hi_x = hi_x.max(p[0]);
        hi_y = hi_y.max(p[1]);
    }
    if hi_x < 0.0 || hi_y < 0.0 || lo_x > w || lo_y > h {
        return mask;
    }
    let x0 = lo_x.floor().max(0.0) as usize;
    let y0 = lo_y.floor().max(0.0) as usize;
    let x1 = (hi_x.floor().min(w - 1.0)) as usize;
    let y1 = (hi_y.floor().min(h - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let covered = match mode {
                MaskMode::Rectangle => true,
                MaskMode::Hull => polygon_overlaps_square(&hull, x as f64, y as f64),
            };
            if covered {
                mask.set(x, y, 0, 1.0);
            }
        }
    }
    mask
}
