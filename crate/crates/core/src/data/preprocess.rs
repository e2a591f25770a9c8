//! Input adaptation: target shape, channel policy, resize and normalization.

use serde::{Deserialize, Serialize};

use super::image::Image;
use super::meta::DatasetMeta;
use crate::error::{Error, Result};

pub const MAX_SIDE: usize = 64;
pub const NORM_MEAN: f32 = 0.5;
pub const NORM_STD: f32 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelPolicy {
    /// Single channel copied into three.
    ReplicateToThree,
    PassThrough,
    /// Channels kept; the model projects them to three with a 3x3 convolution.
    PrefixProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub target_shape: (usize, usize),
    pub channel_policy: ChannelPolicy,
    pub in_channels: usize,
    pub mean: f32,
    pub std: f32,
}

impl InputSpec {
    /// Channel count of a preprocessed image.
    pub fn out_channels(&self) -> usize {
        match self.channel_policy {
            ChannelPolicy::ReplicateToThree => 3,
            _ => self.in_channels,
        }
    }
}

fn scaled(d: usize, longest: usize) -> usize {
    // round(d * 64 / longest), half away from zero, computed exactly
    ((2 * d * MAX_SIDE + longest) / (2 * longest)).max(1)
}

pub fn target_input_shape(meta: &DatasetMeta) -> InputSpec {
    let (rows, cols) = meta.median_shape;
    let target_shape = if rows <= MAX_SIDE && cols <= MAX_SIDE {
        (rows, cols)
    } else {
        let longest = rows.max(cols);
        (scaled(rows, longest), scaled(cols, longest))
    };
    let channel_policy = match meta.channel_count {
        1 => ChannelPolicy::ReplicateToThree,
        3 => ChannelPolicy::PassThrough,
        _ => ChannelPolicy::PrefixProjection,
    };
    InputSpec {
        target_shape,
        channel_policy,
        in_channels: meta.channel_count,
        mean: NORM_MEAN,
        std: NORM_STD,
    }
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(img: &Image, rows: usize, cols: usize) -> Result<Image> {
    if rows == 0 || cols == 0 {
        return Err(Error::Format("resize target has a zero dimension".into()));
    }
    if img.shape() == (rows, cols) {
        return Ok(img.clone());
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let axis = |out: usize, n_out: usize, n_in: usize| {
        let s = ((out as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..cols).map(|x| axis(x, cols, w)).collect();
    let src = img.pixels();
    let mut out = Vec::with_capacity(rows * cols * c);
    for y in 0..rows {
        let (y0, y1, fy) = axis(y, rows, h);
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch];
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Image::new(rows, cols, c, out)
}

/// Resize and channel adjustment, still in [0, 1].
pub fn adapt(img: &Image, spec: &InputSpec) -> Result<Image> {
    if img.channels() != spec.in_channels {
        return Err(Error::Format(format!(
            "image has {} channels, input spec expects {}",
            img.channels(),
            spec.in_channels
        )));
    }
    let (rows, cols) = spec.target_shape;
    let resized = resize_bilinear(img, rows, cols)?;
    if spec.channel_policy != ChannelPolicy::ReplicateToThree {
        return Ok(resized);
    }
    let px = resized.pixels();
    let mut out = Vec::with_capacity(px.len() * 3);
    for &v in px {
        out.extend_from_slice(&[v, v, v]);
    }
    Image::new(rows, cols, 3, out)
}

/// Maps [0, 1] intensities to the model's input scale.
pub fn normalize(img: &Image, spec: &InputSpec) -> Image {
    img.with_pixels(img.pixels().iter().map(|&v| (v - spec.mean) / spec.std).collect())
}

pub fn preprocess(img: &Image, spec: &InputSpec) -> Result<Image> {
    Ok(normalize(&adapt(img, spec)?, spec))
}
