//! Object insertion into 3D Gaussian Splatting scenes.
//!
//! The pipeline takes a pretrained scene and an oriented 3D box, renders a
//! bundle of views around the box, asks an inpainting backend for the new
//! object in every view, and fine-tunes the scene with a loss that only
//! supervises pixels outside the box on the original training views.

pub mod camera;
pub mod error;
pub mod image;
pub mod imageio;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod ply;
pub mod raster;
pub mod recon;
pub mod scene;
pub mod sh;
pub mod synthetic;

pub use camera::{Camera, CameraRecord, Intrinsics, OrientedBBox, TrajectorySpec};
pub use error::{Error, Result};
pub use image::Image;
pub use raster::{render, render_backward, render_fast, RenderGrad, RenderOutput};
pub use scene::{GaussianScene, Splat};
