//! Pinhole cameras, the editing box and the orbit trajectory around it.
//!
//! Cameras follow the OpenCV convention: +x right, +y down, +z forward.
//! Pixel `(u, v)` covers `[u, u+1) x [v, v+1)` in image coordinates, so its
//! center is at `(u + 0.5, v + 0.5)`; a camera-space point projects to
//! `(fx * x / z + cx, fy * y / z + cy)`.
//!
//! The editing box's local +z axis is its vertical axis; trajectories
//! revolve around it with azimuth measured from local +x towards local +y.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square pixels, principal point at the image center.
    pub fn from_fov(width: usize, height: usize, horizontal_fov_degrees: f64) -> Self {
        let fx = 0.5 * width as f64 / (0.5 * horizontal_fov_degrees.to_radians()).tan();
        Self {
            fx,
            fy: fx,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::param("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("image size must be at least 1x1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Self {
            intrinsics,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` mapping to image-up.
    pub fn look_at(
        intrinsics: Intrinsics,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::param("eye coincides with target"))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::param("view direction is parallel to up"))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self::new(intrinsics, rotation, -(rotation * eye))
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let r = &self.rotation;
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !(err <= 1e-6) || !((r.determinant() - 1.0).abs() <= 1e-6) {
            return Err(Error::param("camera rotation is not a proper rotation"));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::param("camera translation is not finite"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Viewing direction (+z of the camera) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Image coordinates of a camera-space point (`z > 0` assumed).
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> [f64; 2] {
        let k = &self.intrinsics;
        [k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy]
    }

    pub fn world_to_camera_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Same camera shifted by a world translation (the scene moving by
    /// `offset` looks identical through the shifted camera).
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self {
            intrinsics: self.intrinsics,
            rotation: self.rotation,
            translation: self.translation - self.rotation * offset,
        }
    }
}

/// JSON form of a camera: intrinsics plus a row-major 4x4 world-to-camera
/// matrix. `name` and `image` are optional annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: [f64; 16],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl From<&Camera> for CameraRecord {
    fn from(cam: &Camera) -> Self {
        let m = cam.world_to_camera_matrix();
        let mut rows = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                rows[r * 4 + c] = m[(r, c)];
            }
        }
        let k = cam.intrinsics;
        Self {
            name: None,
            width: k.width,
            height: k.height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            world_to_camera: rows,
            image: None,
        }
    }
}

impl TryFrom<&CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: &CameraRecord) -> Result<Self> {
        let m = &r.world_to_camera;
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(Error::Format("world_to_camera bottom row must be [0,0,0,1]".into()));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Camera::new(
            Intrinsics {
                fx: r.fx,
                fy: r.fy,
                cx: r.cx,
                cy: r.cy,
                width: r.width,
                height: r.height,
            },
            rotation,
            translation,
        )
    }
}

pub fn cameras_to_json(cameras: &[Camera]) -> Result<String> {
    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

pub fn cameras_from_json(text: &str) -> Result<Vec<Camera>> {
    let records: Vec<CameraRecord> = serde_json::from_str(text)?;
    records.iter().map(Camera::try_from).collect()
}

pub fn load_camera_records(path: impl AsRef<Path>) -> Result<Vec<CameraRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBBox {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBoxRecord {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    pub rotation_wxyz: [f64; 4],
}

impl OrientedBBox {
    pub fn new(center: Vector3<f64>, half_extents: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Result<Self> {
        if !half_extents.iter().all(|&h| h > 0.0 && h.is_finite()) {
            return Err(Error::param("box half extents must be positive"));
        }
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::param("box center must be finite"));
        }
        Ok(Self {
            center,
            half_extents,
            rotation,
        })
    }

    pub fn axis_aligned(center: [f64; 3], half_extents: [f64; 3]) -> Result<Self> {
        Self::new(center.into(), half_extents.into(), UnitQuaternion::identity())
    }

    /// World coordinates of the 8 corners.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.half_extents;
        std::array::from_fn(|i| {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            self.center + self.rotation * Vector3::new(sx * h.x, sy * h.y, sz * h.z)
        })
    }

    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.center)
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.center + self.rotation * local
    }

    /// Local vertical axis in world coordinates.
    pub fn up(&self) -> Vector3<f64> {
        self.rotation * Vector3::z()
    }

    pub fn to_record(&self) -> BBoxRecord {
        let q = self.rotation.quaternion();
        BBoxRecord {
            center: self.center.into(),
            half_extents: self.half_extents.into(),
            rotation_wxyz: [q.w, q.i, q.j, q.k],
        }
    }

    pub fn from_record(r: &BBoxRecord) -> Result<Self> {
        let [w, x, y, z] = r.rotation_wxyz;
        let q = Quaternion::new(w, x, y, z);
        if !(q.norm() > 0.0) {
            return Err(Error::param("box rotation must be non-zero"));
        }
        Self::new(r.center.into(), r.half_extents.into(), UnitQuaternion::from_quaternion(q))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_json(&text)
    }
}

/// True iff `p` lies inside (or on) the box.
pub fn point_in_bbox(bbox: &OrientedBBox, p: &Vector3<f64>) -> bool {
    let local = bbox.to_local(p);
    (0..3).all(|a| local[a].abs() <= bbox.half_extents[a])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcSide {
    /// `[reference - arc, reference]`.
    Left,
    /// `[reference, reference + arc]`.
    Right,
    /// Centered on the reference azimuth.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub n_views: usize,
    pub arc_degrees: f64,
    /// Horizontal distance from the box's vertical axis. `None` picks
    /// `2.5 * max(half_extents)`.
    pub radius: Option<f64>,
    pub elevation_degrees: f64,
    pub side: ArcSide,
    /// Azimuth the arcs are anchored to.
    #[serde(default)]
    pub reference_azimuth_degrees: f64,
    pub intrinsics: Intrinsics,
}

pub const DEFAULT_RADIUS_FACTOR: f64 = 2.5;
pub const DEFAULT_ELEVATION_DEGREES: f64 = 15.0;

impl TrajectorySpec {
    /// 14 views over a 120 degree arc.
    pub fn new(side: ArcSide, intrinsics: Intrinsics) -> Self {
        Self {
            n_views: 14,
            arc_degrees: 120.0,
            radius: None,
            elevation_degrees: DEFAULT_ELEVATION_DEGREES,
            side,
            reference_azimuth_degrees: 0.0,
            intrinsics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_views < 2 {
            return Err(Error::param("a trajectory needs at least 2 views"));
        }
        if !(self.arc_degrees > 0.0 && self.arc_degrees <= 360.0) {
            return Err(Error::param(format!(
                "arc must lie in (0, 360] degrees, got {}",
                self.arc_degrees
            )));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::param(format!("radius must be positive, got {r}")));
            }
        }
        if !(self.elevation_degrees.abs() < 89.0) {
            return Err(Error::param("elevation must lie strictly within (-89, 89) degrees"));
        }
        self.intrinsics.validate()
    }

    /// Azimuths in radians, strictly increasing.
    pub fn azimuths(&self) -> Vec<f64> {
        let arc = self.arc_degrees.to_radians();
        let reference = self.reference_azimuth_degrees.to_radians();
        let start = match self.side {
            ArcSide::Left => reference - arc,
            ArcSide::Right => reference,
            ArcSide::Full => reference - 0.5 * arc,
        };
        let step = arc / (self.n_views - 1) as f64;
        (0..self.n_views).map(|i| start + step * i as f64).collect()
    }
}

/// Camera at the given azimuth on the orbit, looking at the box center.
pub fn orbit_camera(bbox: &OrientedBBox, spec: &TrajectorySpec, azimuth: f64) -> Result<Camera> {
    let radius = spec
        .radius
        .unwrap_or(DEFAULT_RADIUS_FACTOR * bbox.half_extents.max());
    if !(radius > 0.0) {
        return Err(Error::param(format!("radius must be positive, got {radius}")));
    }
    let height = radius * spec.elevation_degrees.to_radians().tan();
    let local = Vector3::new(radius * azimuth.cos(), radius * azimuth.sin(), height);
    Camera::look_at(spec.intrinsics, bbox.to_world(&local), bbox.center, bbox.up())
}

/// Uniformly spaced cameras on a circular arc around the box's vertical
/// axis, all aimed at the box center.
pub fn make_trajectory(bbox: &OrientedBBox, spec: &TrajectorySpec) -> Result<Vec<Camera>> {
    spec.validate()?;
    spec.azimuths()
        .into_iter()
        .map(|a| orbit_camera(bbox, spec, a))
        .collect()
}

/// `count` cameras on the same orbit, each halfway between two adjacent
/// trajectory views and spread evenly along the arc. Useful as held-out
/// views that no trajectory camera coincides with.
pub fn midpoint_cameras(bbox: &OrientedBBox, spec: &TrajectorySpec, count: usize) -> Result<Vec<Camera>> {
    spec.validate()?;
    let az = spec.azimuths();
    let gaps = az.len() - 1;
    if count == 0 || count > gaps {
        return Err(Error::param(format!("can pick 1..={gaps} midpoints, asked for {count}")));
    }
    (0..count)
        .map(|k| {
            let g = (2 * k + 1) * gaps / (2 * count);
            orbit_camera(bbox, spec, 0.5 * (az[g] + az[g + 1]))
        })
        .collect()
}

/// Index of the central view: `floor((len - 1) / 2)`.
pub fn central_index(len: usize) -> Result<usize> {
    if len == 0 {
        return Err(Error::param("empty trajectory has no central view"));
    }
    Ok((len - 1) / 2)
}

pub fn central_camera(trajectory: &[Camera]) -> Result<&Camera> {
    Ok(&trajectory[central_index(trajectory.len())?])
}
