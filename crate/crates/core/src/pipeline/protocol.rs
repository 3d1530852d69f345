//! Inpainting wire protocol, version `inpaint/v1`.
//!
//! `POST /v1/inpaint` takes a JSON body:
//!
//! ```json
//! {
//!   "protocol": "inpaint/v1",
//!   "prompt": "a red armchair",
//!   "seed": 42,
//!   "conditioning_view_index": 6,
//!   "views": [{
//!     "camera": { "width": 128, "height": 128, "fx": .., "fy": .., "cx": .., "cy": ..,
//!                 "world_to_camera": [16 numbers, row-major] },
//!     "background_png": "<base64 8-bit RGB PNG>",
//!     "mask_png": "<base64 1-bit grayscale PNG, 1 = inpaint>",
//!     "depth_png": "<base64 16-bit grayscale PNG>",
//!     "depth_scale": { "min": 1.9, "max": 3.1 }
//!   }]
//! }
//! ```
//!
//! Depth code 0 means "no depth"; code `c >= 1` decodes to
//! `min + (c - 1) / 65534 * (max - min)` metres. The server is expected to
//! build its own conditioning from these raw channels.
//!
//! The response echoes the seed and returns one base64 RGB PNG per view, in
//! request order, each the size of its view:
//!
//! ```json
//! { "protocol": "inpaint/v1", "seed": 42, "images": ["<base64 PNG>", ..] }
//! ```
//!
//! `GET /v1/health` answers `{"status": "ok", "version": "<server version>"}`.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{InpaintRequest, ViewBundle};
use crate::camera::{Camera, CameraRecord};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::imageio::{
    decode_depth_png16, decode_mask_png, decode_png_image, encode_depth_png16, encode_mask_png, encode_png8, DepthScale,
};

pub const PROTOCOL_VERSION: &str = "inpaint/v1";
pub const INPAINT_PATH: &str = "/v1/inpaint";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireView {
    pub camera: CameraRecord,
    pub background_png: String,
    pub mask_png: String,
    pub depth_png: String,
    pub depth_scale: DepthScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub protocol: String,
    pub prompt: String,
    pub seed: u64,
    pub conditioning_view_index: usize,
    pub views: Vec<WireView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub protocol: String,
    pub seed: u64,
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

fn b64_decode(field: &str, s: &str) -> Result<Vec<u8>> {
    B64.decode(s)
        .map_err(|e| Error::Protocol(format!("{field} is not valid base64: {e}")))
}

pub fn encode_request(request: &InpaintRequest) -> Result<WireRequest> {
    request.validate()?;
    let views = request
        .bundles
        .iter()
        .map(|b| {
            let (depth, depth_scale) = encode_depth_png16(&b.depth)?;
            Ok(WireView {
                camera: CameraRecord::from(&b.camera),
                background_png: B64.encode(encode_png8(&b.background)?),
                mask_png: B64.encode(encode_mask_png(&b.mask)?),
                depth_png: B64.encode(depth),
                depth_scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WireRequest {
        protocol: PROTOCOL_VERSION.into(),
        prompt: request.prompt.clone(),
        seed: request.seed,
        conditioning_view_index: request.conditioning_view_index,
        views,
    })
}

/// Server-side decoding. Background and depth come back quantized to their
/// PNG bit depths.
pub fn decode_request(wire: &WireRequest) -> Result<InpaintRequest> {
    if wire.protocol != PROTOCOL_VERSION {
        return Err(Error::Protocol(format!("unsupported protocol {:?}", wire.protocol)));
    }
    let bundles = wire
        .views
        .iter()
        .map(|v| {
            let camera = Camera::try_from(&v.camera)?;
            let bundle = ViewBundle {
                background: decode_png_image(&b64_decode("background_png", &v.background_png)?)?,
                mask: decode_mask_png(&b64_decode("mask_png", &v.mask_png)?)?,
                depth: decode_depth_png16(&b64_decode("depth_png", &v.depth_png)?, &v.depth_scale)?,
                camera,
            };
            bundle.validate().map_err(|e| Error::Protocol(e.to_string()))?;
            Ok(bundle)
        })
        .collect::<Result<Vec<_>>>()?;
    let request = InpaintRequest {
        bundles,
        prompt: wire.prompt.clone(),
        conditioning_view_index: wire.conditioning_view_index,
        seed: wire.seed,
    };
    request.validate().map_err(|e| Error::Protocol(e.to_string()))?;
    Ok(request)
}

pub fn encode_response(seed: u64, images: &[Image]) -> Result<WireResponse> {
    let images = images
        .iter()
        .map(|img| Ok(B64.encode(encode_png8(img)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(WireResponse {
        protocol: PROTOCOL_VERSION.into(),
        seed,
        images,
    })
}

/// Checks the seed echo and decodes every image. Count and size checks
/// against the request happen in [`super::inpaint`].
pub fn decode_response(wire: &WireResponse, expected_seed: u64) -> Result<Vec<Image>> {
    if wire.protocol != PROTOCOL_VERSION {
        return Err(Error::Protocol(format!("unsupported protocol {:?}", wire.protocol)));
    }
    if wire.seed != expected_seed {
        return Err(Error::Protocol(format!(
            "seed echo {} does not match request seed {expected_seed}",
            wire.seed
        )));
    }
    wire.images
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let img = decode_png_image(&b64_decode("image", s)?).map_err(|e| Error::Protocol(format!("image {i}: {e}")))?;
            if img.channels() != 3 {
                return Err(Error::Protocol(format!("image {i} is not RGB")));
            }
            Ok(img)
        })
        .collect()
}

/// Blocking client for a remote inpainting service.
#[derive(Debug, Clone)]
pub struct HttpInpainter {
    base_url: String,
    pub timeout: Duration,
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub backoff: Duration,
}

enum Failure {
    Retry(String),
    Fatal(Error),
}

impl HttpInpainter {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(600),
            attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }

    fn call(&self, agent: &ureq::Agent, path: &str, body: Option<&str>) -> std::result::Result<String, Failure> {
        let url = format!("{}{}", self.base_url, path);
        let result = match body {
            Some(b) => agent.post(&url).header("content-type", "application/json").send(b),
            None => agent.get(&url).call(),
        };
        let mut response = result.map_err(|e| Failure::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .map_err(|e| Failure::Retry(e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            500..=599 => Err(Failure::Retry(format!("HTTP {status}: {text}"))),
            _ => Err(Failure::Fatal(Error::Protocol(format!("HTTP {status}: {text}")))),
        }
    }

    /// Up to `attempts` tries with exponential backoff on retriable failures.
    fn with_retry(&self, path: &str, body: Option<&str>) -> Result<String> {
        let agent = self.agent();
        let attempts = self.attempts.max(1);
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.call(&agent, path, body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => last = msg,
            }
            if attempt < attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }

    pub fn health(&self) -> Result<Health> {
        let text = self.with_retry(HEALTH_PATH, None)?;
        serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("bad health payload: {e}")))
    }

    /// Raw images from the service, before mask compositing.
    pub fn inpaint(&self, request: &InpaintRequest) -> Result<Vec<Image>> {
        let body = serde_json::to_string(&encode_request(request)?)?;
        let text = self.with_retry(INPAINT_PATH, Some(&body))?;
        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("bad response payload: {e}")))?;
        decode_response(&wire, request.seed)
    }
}
