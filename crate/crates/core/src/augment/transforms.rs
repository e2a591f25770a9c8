//! Image transforms on [0, 1] intensities. Geometric warps use bilinear
//! resampling with zero fill outside the frame.

use crate::data::Image;

fn clamp01(v: f32) -> f32 {
    v.clamp(0.0, 1.0)
}

/// Warps by an inverse map from output pixel (x, y) to source coordinates.
fn warp(img: &Image, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.pixels();
    let mut out = vec![0.0f32; src.len()];
    let fetch = |y: isize, x: isize, ch: usize| -> f32 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            src[(y as usize * w + x as usize) * c + ch]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inverse(x as f64, y as f64);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..c {
                let top = fetch(y0, x0, ch) * (1.0 - fx) + fetch(y0, x0 + 1, ch) * fx;
                let bottom = fetch(y0 + 1, x0, ch) * (1.0 - fx) + fetch(y0 + 1, x0 + 1, ch) * fx;
                out[(y * w + x) * c + ch] = clamp01(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    img.with_pixels(out)
}

fn center(img: &Image) -> (f64, f64) {
    ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0)
}

/// Counter-clockwise rotation about the image centre.
pub fn rotate(img: &Image, degrees: f32) -> Image {
    let (cx, cy) = center(img);
    let (s, co) = (f64::from(degrees).to_radians()).sin_cos();
    warp(img, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + co * dx - s * dy, cy + s * dx + co * dy)
    })
}

pub fn shear_x(img: &Image, ratio: f32) -> Image {
    let (_, cy) = center(img);
    let m = f64::from(ratio);
    warp(img, |x, y| (x + m * (y - cy), y))
}

pub fn shear_y(img: &Image, ratio: f32) -> Image {
    let (cx, _) = center(img);
    let m = f64::from(ratio);
    warp(img, |x, y| (x, y + m * (x - cx)))
}

pub fn translate_x(img: &Image, fraction: f32) -> Image {
    let d = f64::from(fraction) * img.width() as f64;
    warp(img, |x, y| (x - d, y))
}

pub fn translate_y(img: &Image, fraction: f32) -> Image {
    let d = f64::from(fraction) * img.height() as f64;
    warp(img, |x, y| (x, y - d))
}

pub fn flip_lr(img: &Image) -> Image {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.pixels();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            out.extend_from_slice(&src[(y * w + x) * c..(y * w + x + 1) * c]);
        }
    }
    img.with_pixels(out)
}

pub fn invert(img: &Image) -> Image {
    img.with_pixels(img.pixels().iter().map(|&v| 1.0 - v).collect())
}

pub fn solarize(img: &Image, threshold: f32) -> Image {
    img.with_pixels(
        img.pixels()
            .iter()
            .map(|&v| if v >= threshold { 1.0 - v } else { v })
            .collect(),
    )
}

pub fn posterize(img: &Image, bits: u8) -> Image {
    let bits = bits.clamp(1, 8);
    let mask = 0xFFu8 << (8 - bits);
    img.with_pixels(
        img.pixels()
            .iter()
            .map(|&v| f32::from(crate::data::quantize(v) & mask) / 255.0)
            .collect(),
    )
}

/// Per-channel linear stretch of [min, max] onto [0, 1].
pub fn auto_contrast(img: &Image) -> Image {
    let c = img.channels();
    let mut out = img.pixels().to_vec();
    for ch in 0..c {
        let (lo, hi) = out
            .iter()
            .skip(ch)
            .step_by(c)
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi > lo {
            let scale = 1.0 / (hi - lo);
            for v in out.iter_mut().skip(ch).step_by(c) {
                *v = clamp01((*v - lo) * scale);
            }
        }
    }
    img.with_pixels(out)
}

/// Per-channel histogram equalization over 256 levels.
pub fn equalize(img: &Image) -> Image {
    let c = img.channels();
    let q = img.to_u8();
    let mut out = img.pixels().to_vec();
    for ch in 0..c {
        let mut hist = [0usize; 256];
        for &b in q.iter().skip(ch).step_by(c) {
            hist[b as usize] += 1;
        }
        let nonzero: Vec<usize> = hist.iter().copied().filter(|&n| n > 0).collect();
        if nonzero.len() <= 1 {
            continue;
        }
        let step = (nonzero.iter().sum::<usize>() - nonzero[nonzero.len() - 1]) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0u8; 256];
        let mut n = step / 2;
        for (i, slot) in lut.iter_mut().enumerate() {
            *slot = (n / step).min(255) as u8;
            n += hist[i];
        }
        for (v, &b) in out.iter_mut().skip(ch).step_by(c).zip(q.iter().skip(ch).step_by(c)) {
            *v = f32::from(lut[b as usize]) / 255.0;
        }
    }
    img.with_pixels(out)
}

fn luminance(px: &[f32]) -> f32 {
    match px.len() {
        3 | 4 => 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2],
        _ => px[0],
    }
}

fn blend(img: &Image, degenerate: &[f32], factor: f32) -> Image {
    img.with_pixels(
        img.pixels()
            .iter()
            .zip(degenerate)
            .map(|(&v, &d)| clamp01(d + factor * (v - d)))
            .collect(),
    )
}

/// Blend with the mean grey level.
pub fn contrast(img: &Image, factor: f32) -> Image {
    let c = img.channels();
    let n = img.height() * img.width();
    let mean = img.pixels().chunks(c).map(luminance).sum::<f32>() / n as f32;
    blend(img, &vec![mean; img.pixels().len()], factor)
}

/// Blend with the per-pixel grey image; single-channel images are unchanged.
pub fn color(img: &Image, factor: f32) -> Image {
    let c = img.channels();
    if c < 3 {
        return img.clone();
    }
    let mut grey = Vec::with_capacity(img.pixels().len());
    for px in img.pixels().chunks(c) {
        let l = luminance(px);
        grey.extend(std::iter::repeat_n(l, 3));
        grey.extend_from_slice(&px[3..]);
    }
    blend(img, &grey, factor)
}

pub fn brightness(img: &Image, factor: f32) -> Image {
    blend(img, &vec![0.0; img.pixels().len()], factor)
}

/// Blend with a 3x3 smoothed copy (centre weight 5, neighbours 1); borders stay sharp.
pub fn sharpness(img: &Image, factor: f32) -> Image {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.pixels();
    let mut smooth = src.to_vec();
    if h >= 3 && w >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let weight = if dy == 1 && dx == 1 { 5.0 } else { 1.0 };
                            acc += weight * src[((y + dy - 1) * w + x + dx - 1) * c + ch];
                        }
                    }
                    smooth[(y * w + x) * c + ch] = acc / 13.0;
                }
            }
        }
    }
    blend(img, &smooth, factor)
}

/// Fills a square of side `side` centred at (cy, cx), clipped to the frame.
pub fn cutout(img: &Image, side: usize, cy: usize, cx: usize, fill: f32) -> Image {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut out = img.pixels().to_vec();
    if side == 0 {
        return img.with_pixels(out);
    }
    let y0 = cy.saturating_sub(side / 2);
    let x0 = cx.saturating_sub(side / 2);
    for y in y0..(y0 + side).min(h) {
        for x in x0..(x0 + side).min(w) {
            out[(y * w + x) * c..(y * w + x + 1) * c].fill(fill);
        }
    }
    img.with_pixels(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, c: usize) -> Image {
        Image::from_fn(h, w, c, |r, col, ch| ((r * 7 + col * 3 + ch * 11) % 17) as f32 / 16.0).unwrap()
    }

    #[test]
    fn involutions_are_exact() {
        let img = ramp(9, 7, 3);
        assert_eq!(invert(&invert(&img)), img);
        assert_eq!(flip_lr(&flip_lr(&img)), img);
    }

    #[test]
    fn zero_magnitudes_are_identities() {
        let img = ramp(8, 8, 1);
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(shear_x(&img, 0.0), img);
        assert_eq!(translate_y(&img, 0.0), img);
        assert_eq!(brightness(&img, 1.0), img);
        assert_eq!(posterize(&img, 8), posterize(&posterize(&img, 8), 8));
    }

    #[test]
    fn translate_shifts_content() {
        let img = Image::from_fn(4, 4, 1, |_, c, _| if c == 0 { 1.0 } else { 0.0 }).unwrap();
        let moved = translate_x(&img, 0.25);
        assert_eq!(moved.get(0, 0, 0), 0.0);
        assert_eq!(moved.get(0, 1, 0), 1.0);
    }

    #[test]
    fn rotate_round_trip_on_smooth_image() {
        let img = Image::from_fn(32, 32, 1, |r, c, _| {
            0.5 + 0.3 * ((r as f32 / 9.0).sin() * (c as f32 / 11.0).cos())
        })
        .unwrap();
        let back = rotate(&rotate(&img, 20.0), -20.0);
        for r in 8..24 {
            for c in 8..24 {
                assert!((back.get(r, c, 0) - img.get(r, c, 0)).abs() <= 2.0 / 255.0);
            }
        }
    }

    #[test]
    fn photometric_outputs_in_range() {
        let img = ramp(6, 6, 3);
        for out in [
            contrast(&img, 1.9),
            color(&img, 1.9),
            brightness(&img, 1.9),
            sharpness(&img, 1.9),
            auto_contrast(&img),
            equalize(&img),
            solarize(&img, 0.3),
        ] {
            assert!(out.is_unit_range());
            assert_eq!(out.shape(), img.shape());
        }
    }

    #[test]
    fn solarize_zero_threshold_inverts() {
        let img = ramp(4, 4, 1);
        assert_eq!(solarize(&img, 0.0), invert(&img));
    }

    #[test]
    fn cutout_fills_clipped_square() {
        let img = Image::filled(5, 5, 1, 0.0).unwrap();
        let out = cutout(&img, 2, 0, 0, 0.5);
        let filled = out.pixels().iter().filter(|&&v| v == 0.5).count();
        assert_eq!(filled, 4);
    }
}
