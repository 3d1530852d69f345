//! Image files: 8-bit PNG previews, 1-bit mask PNG, 16-bit depth PNG with a
//! min/max sidecar, and PFM for float images.
//!
//! PFM is written little-endian (scale `-1.0`), rows bottom-to-top, `f32`.
//! Float images are therefore exact only up to `f32` precision; a
//! save/load/save cycle is byte-stable.
//!
//! Depth PNGs reserve code 0 for "no depth"; valid depths `d` map to
//! `1 + round((d - min) / (max - min) * 65534)`.

use std::io::{BufRead, Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("png: {e}"))
}

fn encode_png(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(data).map_err(png_err)?;
    }
    Ok(out)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit PNG of an RGB or single-channel image, values clamped to [0,1].
pub fn encode_png8(img: &Image) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let color = if img.channels() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    };
    encode_png(img.width(), img.height(), color, png::BitDepth::Eight, &bytes)
}

/// 1-bit grayscale PNG; any nonzero pixel is set.
pub fn encode_mask_png(mask: &Image) -> Result<Vec<u8>> {
    if mask.channels() != 1 {
        return Err(Error::param("mask must be single-channel"));
    }
    let (w, h) = (mask.width(), mask.height());
    let row_bytes = w.div_ceil(8);
    let mut packed = vec![0u8; row_bytes * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y, 0) != 0.0 {
                packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    encode_png(w, h, png::ColorType::Grayscale, png::BitDepth::One, &packed)
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    /// Normalized samples in [0,1].
    samples: Vec<f64>,
    /// Raw 16-bit codes, for 16-bit grayscale input.
    raw16: Option<Vec<u16>>,
}

fn decode_png(bytes: &[u8]) -> Result<Decoded> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(Error::Format(format!("png: unsupported color type {other:?}"))),
    };
    let line = info.line_size;
    let n = width * channels;
    let mut samples = Vec::with_capacity(width * height * channels);
    let mut raw16 = None;
    match info.bit_depth {
        png::BitDepth::Eight => {
            for y in 0..height {
                samples.extend(buf[y * line..y * line + n].iter().map(|&b| b as f64 / 255.0));
            }
        }
        png::BitDepth::Sixteen => {
            let mut codes = Vec::with_capacity(width * height * channels);
            for y in 0..height {
                let row = &buf[y * line..y * line + 2 * n];
                codes.extend(row.chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]])));
            }
            samples.extend(codes.iter().map(|&c| c as f64 / 65535.0));
            raw16 = Some(codes);
        }
        other => return Err(Error::Format(format!("png: unexpected bit depth {other:?}"))),
    }
    Ok(Decoded {
        width,
        height,
        channels,
        samples,
        raw16,
    })
}

/// Decodes an 8- or 16-bit RGB/gray PNG into an image with values in [0,1].
pub fn decode_png_image(bytes: &[u8]) -> Result<Image> {
    let d = decode_png(bytes)?;
    Image::from_data(d.width, d.height, d.channels, d.samples)
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<Image> {
    let d = decode_png(bytes)?;
    if d.channels != 1 {
        return Err(Error::Format("mask PNG must be grayscale".into()));
    }
    let data = d.samples.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    Image::from_data(d.width, d.height, 1, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthScale {
    pub min: f64,
    pub max: f64,
}

/// Range of the nonzero entries of a depth map; `(0, 0)` when all empty.
pub fn depth_range(depth: &Image) -> DepthScale {
    let valid = depth.data().iter().copied().filter(|&d| d != 0.0);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for d in valid {
        min = min.min(d);
        max = max.max(d);
    }
    if min.is_finite() {
        DepthScale { min, max }
    } else {
        DepthScale { min: 0.0, max: 0.0 }
    }
}

fn depth_code(d: f64, s: &DepthScale) -> u16 {
    if d == 0.0 {
        return 0;
    }
    let span = s.max - s.min;
    let t = if span > 0.0 { ((d - s.min) / span).clamp(0.0, 1.0) } else { 0.0 };
    1 + (t * 65534.0).round() as u16
}

/// 16-bit grayscale PNG plus the metric range needed to invert it.
pub fn encode_depth_png16(depth: &Image) -> Result<(Vec<u8>, DepthScale)> {
    if depth.channels() != 1 {
        return Err(Error::param("depth must be single-channel"));
    }
    let scale = depth_range(depth);
    let mut bytes = Vec::with_capacity(depth.pixel_count() * 2);
    for &d in depth.data() {
        bytes.extend_from_slice(&depth_code(d, &scale).to_be_bytes());
    }
    let png = encode_png(
        depth.width(),
        depth.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &bytes,
    )?;
    Ok((png, scale))
}

pub fn decode_depth_png16(bytes: &[u8], scale: &DepthScale) -> Result<Image> {
    let d = decode_png(bytes)?;
    let codes = d
        .raw16
        .filter(|_| d.channels == 1)
        .ok_or_else(|| Error::Format("depth PNG must be 16-bit grayscale".into()))?;
    let span = scale.max - scale.min;
    let data = codes
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                scale.min + (c - 1) as f64 / 65534.0 * span
            }
        })
        .collect();
    Image::from_data(d.width, d.height, 1, data)
}

pub fn write_pfm_bytes(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width(), img.height()).into_bytes();
    let row = img.width() * img.channels();
    for y in (0..img.height()).rev() {
        for &v in &img.data()[y * row..(y + 1) * row] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_pfm_bytes(bytes: &[u8]) -> Result<Image> {
    let mut cursor = Cursor::new(bytes);
    let token = |cursor: &mut Cursor<&[u8]>| -> Result<String> {
        let mut line = String::new();
        cursor.read_line(&mut line)?;
        Ok(line.trim().to_string())
    };
    let channels = match token(&mut cursor)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("pfm: bad magic '{other}'"))),
    };
    let dims = token(&mut cursor)?;
    let mut it = dims.split_whitespace().map(|t| t.parse::<usize>());
    let (w, h) = match (it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h))) => (w, h),
        _ => return Err(Error::Format(format!("pfm: bad dimensions '{dims}'"))),
    };
    let scale: f64 = token(&mut cursor)?
        .parse()
        .map_err(|_| Error::Format("pfm: bad scale".into()))?;
    let little = scale < 0.0;
    let row = w * channels;
    let mut raw = vec![0u8; row * h * 4];
    cursor
        .read_exact(&mut raw)
        .map_err(|_| Error::Format("pfm: truncated payload".into()))?;
    let mut data = vec![0.0; row * h];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (i / row, i % row);
        data[(h - 1 - file_row) * row + col] = v as f64;
    }
    Image::from_data(w, h, channels, data)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io_at(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io_at(path, e))
}

pub fn save_pfm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &write_pfm_bytes(img))
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<Image> {
    read_pfm_bytes(&read_file(path.as_ref())?)
}

pub fn save_png8(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_png8(img)?)
}

pub fn save_mask_png(mask: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_mask_png(mask)?)
}

pub fn load_mask_png(path: impl AsRef<Path>) -> Result<Image> {
    decode_mask_png(&read_file(path.as_ref())?)
}

pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    decode_png_image(&read_file(path.as_ref())?)
}

/// Writes depth normalized to [0,1] as a 16-bit PNG and the metric range
/// to `<png>.json`.
pub fn save_depth_normalized(depth: &Image, png_path: impl AsRef<Path>) -> Result<DepthScale> {
    let png_path = png_path.as_ref();
    let (bytes, scale) = encode_depth_png16(depth)?;
    write_file(png_path, &bytes)?;
    let sidecar = png_path.with_extension("json");
    write_file(&sidecar, serde_json::to_string_pretty(&scale)?.as_bytes())?;
    Ok(scale)
}

/// Horizontal strip of equally sized images, saved as an 8-bit PNG.
pub fn save_contact_sheet(images: &[&Image], path: impl AsRef<Path>) -> Result<()> {
    let Some(first) = images.first() else {
        return Err(Error::param("contact sheet needs at least one image"));
    };
    let (w, h) = (first.width(), first.height());
    let mut sheet = Image::new(w * images.len(), h, 3);
    for (k, img) in images.iter().enumerate() {
        if img.width() != w || img.height() != h {
            return Err(Error::param("contact sheet images differ in size"));
        }
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let v = img.get(x, y, if img.channels() == 3 { c } else { 0 });
                    sheet.set(k * w + x, y, c, v);
                }
            }
        }
    }
    save_png8(&sheet, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize, c: usize) -> Image {
        let data = (0..w * h * c).map(|i| (i as f64 * 0.37).fract()).collect();
        Image::from_data(w, h, c, data).unwrap()
    }

    #[test]
    fn png8_roundtrip_is_quantized() {
        let img = gradient(7, 5, 3);
        let back = decode_png_image(&encode_png8(&img).unwrap()).unwrap();
        assert!(img.max_abs_diff(&back) <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn mask_png_is_lossless() {
        let mut m = Image::new(13, 3, 1);
        for (x, y) in [(0, 0), (7, 1), (8, 1), (12, 2)] {
            m.set(x, y, 0, 1.0);
        }
        assert_eq!(decode_mask_png(&encode_mask_png(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn depth_png_keeps_sentinel_and_range() {
        let mut d = Image::new(4, 2, 1);
        d.set(1, 0, 0, 2.0);
        d.set(2, 1, 0, 5.0);
        d.set(3, 1, 0, 3.5);
        let (bytes, scale) = encode_depth_png16(&d).unwrap();
        assert_eq!(scale, DepthScale { min: 2.0, max: 5.0 });
        let back = decode_depth_png16(&bytes, &scale).unwrap();
        assert_eq!(back.get(0, 0, 0), 0.0);
        assert_eq!(back.get(1, 0, 0), 2.0);
        assert_eq!(back.get(2, 1, 0), 5.0);
        assert!((back.get(3, 1, 0) - 3.5).abs() < 3.0 / 65534.0);
    }

    #[test]
    fn pfm_roundtrip_is_byte_stable() {
        for c in [1, 3] {
            let img = gradient(6, 4, c);
            let bytes = write_pfm_bytes(&img);
            let back = read_pfm_bytes(&bytes).unwrap();
            assert!(img.max_abs_diff(&back) < 1e-7);
            assert_eq!(write_pfm_bytes(&back), bytes);
        }
    }
}
