//! Floating-point raster images.

use crate::error::{Error, Result};

/// An `H×W×C` raster with interleaved channels and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Wraps raw interleaved data. Values are clamped into `[0, 1]`.
    pub fn from_vec(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", height * width * channels),
                found: format!("{} values", data.len()),
            });
        }
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::from_vec(height, width, channels, vec![value; height * width * channels])
            .expect("filled image has consistent shape")
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds an image from a per-sample function `(row, col, channel) -> value`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::from_vec(height, width, channels, data).expect("from_fn produces consistent shape")
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of spatial pixels, `H·W`.
    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    /// Sets a sample, clamping into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = clamp_unit(value);
    }

    /// Channel values of the pixel at `(row, col)`.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = self.index(row, col, 0);
        &self.data[i..i + self.channels]
    }

    /// Applies `f` to every sample and clamps the result.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| clamp_unit(f(v))).collect(),
        }
    }

    /// Copies the channels of pixel `pixel_index` (row-major) from `src`.
    pub(crate) fn copy_pixel_from(&mut self, src: &Image, pixel_index: usize) {
        let c = self.channels;
        let start = pixel_index * c;
        self.data[start..start + c].copy_from_slice(&src.data[start..start + c]);
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    /// Luma per pixel (ITU-R 601 weights), or the single channel itself.
    pub fn grayscale(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pixel_count());
        for px in self.data.chunks_exact(self.channels) {
            out.push(match px {
                [r, g, b] => 0.299 * r + 0.587 * g + 0.114 * b,
                [v] => *v,
                _ => unreachable!("channel count validated at construction"),
            });
        }
        out
    }

    /// Separable Gaussian blur with the given standard deviation in pixels.
    /// Borders are handled by clamping coordinates to the image.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = {
            let raw: Vec<f64> = (-radius..=radius)
                .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        };
        let (h, w, ch) = self.shape();
        let mut tmp = vec![0.0; self.data.len()];
        for r in 0..h {
            for c in 0..w {
                for k in 0..ch {
                    let mut acc = 0.0;
                    for (ki, kv) in kernel.iter().enumerate() {
                        let cc = (c as isize + ki as isize - radius).clamp(0, w as isize - 1) as usize;
                        acc += kv * self.data[(r * w + cc) * ch + k];
                    }
                    tmp[(r * w + c) * ch + k] = acc;
                }
            }
        }
        let mut out = vec![0.0; self.data.len()];
        for r in 0..h {
            for c in 0..w {
                for k in 0..ch {
                    let mut acc = 0.0;
                    for (ki, kv) in kernel.iter().enumerate() {
                        let rr = (r as isize + ki as isize - radius).clamp(0, h as isize - 1) as usize;
                        acc += kv * tmp[(rr * w + c) * ch + k];
                    }
                    out[(r * w + c) * ch + k] = acc;
                }
            }
        }
        Image::from_vec(h, w, ch, out).expect("blur preserves shape")
    }
}

pub(crate) fn format_shape((h, w, c): (usize, usize, usize)) -> String {
    format!("{h}x{w}x{c}")
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    // NaN maps to 0 so a bad op can never poison downstream features.
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_clamps() {
        let img = Image::from_vec(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::from_vec(0, 2, 1, vec![]).is_err());
        assert!(Image::from_vec(1, 2, 2, vec![0.0; 4]).is_err());
        assert!(Image::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn blur_preserves_constant_image() {
        let img = Image::filled(9, 7, 3, 0.25);
        let b = img.gaussian_blur(2.0);
        for v in b.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn grayscale_of_gray_pixel() {
        let img = Image::filled(2, 2, 3, 0.4);
        for g in img.grayscale() {
            assert!((g - 0.4).abs() < 1e-12);
        }
    }
}
