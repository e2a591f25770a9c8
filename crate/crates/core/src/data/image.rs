use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Format(format!("zero-dimension image {height}x{width}")));
        }
        if !(1..=4).contains(&channels) {
            return Err(Error::Format(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Format(format!(
                "pixel buffer of length {} does not match {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image from a per-pixel function of (row, col, channel).
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    pixels.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.pixels[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let idx = (row * self.width + col) * self.channels + ch;
        self.pixels[idx] = v;
    }

    /// Same geometry, new buffer.
    pub(crate) fn with_pixels(&self, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(pixels.len(), self.pixels.len());
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            pixels,
        }
    }

    /// True when every value is finite and inside [0, 1].
    pub fn is_unit_range(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    /// 8-bit quantization used for PNG encoding and dataset checksums.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )
    }
}

#[inline]
pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(Image::new(0, 3, 1, vec![]), Err(Error::Format(_))));
        assert!(matches!(Image::new(2, 2, 5, vec![0.0; 20]), Err(Error::Format(_))));
        assert!(matches!(Image::new(2, 2, 1, vec![0.0; 3]), Err(Error::Format(_))));
    }

    #[test]
    fn u8_round_trip_is_exact() {
        let bytes: Vec<u8> = (0..=255).collect();
        let img = Image::from_u8(16, 16, 1, &bytes).unwrap();
        assert_eq!(img.to_u8(), bytes);
    }
}
