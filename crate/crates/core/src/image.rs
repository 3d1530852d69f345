use crate::error::{Error, Result};

/// Row-major interleaved float image: RGB (3 channels) or mask / depth
/// (1 channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "unsupported channel count {channels}");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::param(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::param(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Uniform RGB image.
    pub fn rgb(width: usize, height: usize, color: [f64; 3]) -> Self {
        let mut img = Self::new(width, height, 3);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&color);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::param(format!(
                "image shapes differ: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Checks that `mask` is a single-channel image matching this one's size.
    pub(crate) fn check_mask(&self, mask: &Image) -> Result<()> {
        if mask.channels != 1 || mask.width != self.width || mask.height != self.height {
            return Err(Error::param("mask must be single-channel and match the image size"));
        }
        Ok(())
    }

    /// Multiplies every channel of each pixel by the mask value there.
    pub fn multiply_by_mask(&self, mask: &Image) -> Image {
        let mut out = self.clone();
        for (px, m) in out.data.chunks_exact_mut(self.channels).zip(&mask.data) {
            px.iter_mut().for_each(|v| *v *= m);
        }
        out
    }

    /// `1 - self` for a single-channel mask.
    pub fn complement(&self) -> Image {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = 1.0 - *v);
        out
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// `mask ? inside : self`, per pixel; `mask` must be binary.
    pub fn composite_inside(&self, inside: &Image, mask: &Image) -> Image {
        let mut out = self.clone();
        let c = self.channels;
        for (i, &m) in mask.data.iter().enumerate() {
            if m != 0.0 {
                out.data[i * c..(i + 1) * c].copy_from_slice(&inside.data[i * c..(i + 1) * c]);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Square dilation of a single-channel mask by `radius` pixels.
    pub fn dilate(&self, radius: usize) -> Image {
        assert_eq!(self.channels, 1);
        let mut out = Image::new(self.width, self.height, 1);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y, 0) == 0.0 {
                    continue;
                }
                let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(self.height - 1));
                let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(self.width - 1));
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        out.set(xx, yy, 0, 1.0);
                    }
                }
            }
        }
        out
    }
}
