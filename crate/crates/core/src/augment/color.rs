use image::{GrayImage, Luma, Rgb, RgbImage};

use super::geometry::to_u8;
use crate::{Error, Result};

pub(crate) fn luma(p: &Rgb<u8>) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

pub fn luminance(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| Luma([to_u8(luma(img.get_pixel(x, y)))]))
}

/// Full-range YCbCr chroma of a pixel.
pub(crate) fn chroma(p: &Rgb<u8>) -> (f64, f64) {
    let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
    (
        128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b,
    )
}

pub(crate) fn from_ycbcr(y: f64, cb: f64, cr: f64) -> Rgb<u8> {
    Rgb([
        to_u8(y + 1.402 * (cr - 128.0)),
        to_u8(y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0)),
        to_u8(y + 1.772 * (cb - 128.0)),
    ])
}

fn is_gray(img: &RgbImage) -> bool {
    img.pixels().all(|p| p[0] == p[1] && p[1] == p[2])
}

/// Reorders channels: output channel `i` takes input channel `perm[i]`.
/// A gray image has nothing to shuffle and is returned unchanged.
pub fn channel_shuffle(img: &RgbImage, perm: [usize; 3]) -> Result<RgbImage> {
    let mut sorted = perm;
    sorted.sort_unstable();
    if sorted != [0, 1, 2] {
        return Err(Error::InvalidParameter(format!("{perm:?} is not a channel permutation")));
    }
    if is_gray(img) {
        log::warn!("channel_shuffle on a grayscale image is a no-op");
        return Ok(img.clone());
    }
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let src = p.0;
        p.0 = [src[perm[0]], src[perm[1]], src[perm[2]]];
    }
    Ok(out)
}

/// Blends each pixel toward its luminance; `alpha = 1` is full grayscale.
pub fn grayscale(img: &RgbImage, alpha: f64) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let y = luma(p);
        for c in p.0.iter_mut() {
            *c = to_u8((1.0 - alpha) * *c as f64 + alpha * y);
        }
    }
    out
}

fn rgb_to_hsv(p: &Rgb<u8>) -> (f64, f64, f64) {
    let [r, g, b] = p.0.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb<u8> {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    Rgb([to_u8((r + m) * 255.0), to_u8((g + m) * 255.0), to_u8((b + m) * 255.0)])
}

/// Rotates hue by `hue_shift_deg` and multiplies saturation by `saturation`.
pub fn hue_saturation(img: &RgbImage, hue_shift_deg: f64, saturation: f64) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let (h, s, v) = rgb_to_hsv(p);
        *p = hsv_to_rgb(h + hue_shift_deg, (s * saturation).clamp(0.0, 1.0), v);
    }
    out
}

/// Median-cut palette reduction to at most `colors` (2..=16) colors.
pub fn quantize(img: &RgbImage, colors: usize) -> Result<RgbImage> {
    if !(2..=16).contains(&colors) {
        return Err(Error::InvalidParameter(format!("palette size {colors} outside [2, 16]")));
    }
    let pixels: Vec<[u8; 3]> = img.pixels().map(|p| p.0).collect();
    let mut boxes: Vec<Vec<usize>> = vec![(0..pixels.len()).collect()];
    while boxes.len() < colors {
        let spread = |b: &Vec<usize>| -> (u8, usize) {
            (0..3)
                .map(|c| {
                    let (lo, hi) = b.iter().fold((255u8, 0u8), |(lo, hi), &i| {
                        (lo.min(pixels[i][c]), hi.max(pixels[i][c]))
                    });
                    (hi - lo, c)
                })
                .max_by_key(|&(r, c)| (r, std::cmp::Reverse(c)))
                .unwrap_or((0, 0))
        };
        let Some((pick, (range, channel))) = boxes
            .iter()
            .map(spread)
            .enumerate()
            .max_by_key(|&(i, (r, _))| (r, std::cmp::Reverse(i)))
        else {
            break;
        };
        if range == 0 {
            break;
        }
        let mut b = boxes.swap_remove(pick);
        b.sort_by_key(|&i| (pixels[i][channel], i));
        let upper = b.split_off(b.len() / 2);
        boxes.push(b);
        boxes.push(upper);
    }
    let mut out = img.clone();
    let buf: &mut [u8] = &mut out;
    for b in &boxes {
        let mut mean = [0.0f64; 3];
        for &i in b {
            for c in 0..3 {
                mean[c] += pixels[i][c] as f64;
            }
        }
        let color = mean.map(|m| to_u8(m / b.len() as f64));
        for &i in b {
            buf[i * 3..i * 3 + 3].copy_from_slice(&color);
        }
    }
    Ok(out)
}

pub fn quantize16(img: &RgbImage) -> RgbImage {
    quantize(img, 16).expect("16 is a valid palette size")
}

/// `v' = contrast · (v − 128) + 128 + brightness`, clamped.
pub fn contrast_brightness(img: &RgbImage, contrast: f64, brightness: f64) -> RgbImage {
    let mut out = img.clone();
    for c in out.iter_mut() {
        *c = to_u8(contrast * (*c as f64 - 128.0) + 128.0 + brightness);
    }
    out
}

/// `v' = 255 · (v / 255)^gamma`.
pub fn gamma_contrast(img: &RgbImage, gamma: f64) -> Result<RgbImage> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} must be positive")));
    }
    let lut: Vec<u8> = (0..256).map(|v| to_u8(255.0 * (v as f64 / 255.0).powf(gamma))).collect();
    let mut out = img.clone();
    for c in out.iter_mut() {
        *c = lut[*c as usize];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn colorful(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 9) as u8, (y * 7) as u8, ((x * y * 13) % 256) as u8]))
    }

    #[test]
    fn identity_shuffle_and_gray_shuffle() {
        let img = colorful(8, 8);
        assert_eq!(channel_shuffle(&img, [0, 1, 2]).unwrap(), img);
        let gray = RgbImage::from_fn(4, 4, |x, _| Rgb([x as u8 * 10; 3]));
        assert_eq!(channel_shuffle(&gray, [2, 0, 1]).unwrap(), gray);
        assert!(channel_shuffle(&img, [0, 0, 1]).is_err());
    }

    #[test]
    fn shuffle_moves_channels() {
        let img = RgbImage::from_pixel(1, 1, Rgb([1, 2, 3]));
        assert_eq!(channel_shuffle(&img, [2, 0, 1]).unwrap().get_pixel(0, 0).0, [3, 1, 2]);
    }

    #[test]
    fn grayscale_of_gray_is_identity() {
        let gray = RgbImage::from_fn(16, 16, |x, y| Rgb([(x * 16 + y) as u8; 3]));
        assert_eq!(grayscale(&gray, 1.0), gray);
        let img = colorful(6, 6);
        assert_eq!(grayscale(&img, 0.0), img);
    }

    #[test]
    fn quantize_limits_palette() {
        let img = colorful(40, 30);
        let distinct = |im: &RgbImage| im.pixels().map(|p| p.0).collect::<HashSet<_>>().len();
        assert!(distinct(&img) > 16);
        assert!(distinct(&quantize16(&img)) <= 16);
        let few = RgbImage::from_fn(4, 4, |x, _| Rgb([x as u8 * 60, 0, 0]));
        assert_eq!(quantize16(&few), few);
    }

    #[test]
    fn hsv_round_trip_without_change() {
        let img = colorful(16, 16);
        let out = hue_saturation(&img, 0.0, 1.0);
        for (a, b) in img.pixels().zip(out.pixels()) {
            for c in 0..3 {
                assert!((a[c] as i32 - b[c] as i32).abs() <= 1);
            }
        }
        let turned = hue_saturation(&RgbImage::from_pixel(1, 1, Rgb([255, 0, 0])), 120.0, 1.0);
        assert_eq!(turned.get_pixel(0, 0).0, [0, 255, 0]);
    }

    #[test]
    fn contrast_and_gamma_identities() {
        let img = colorful(5, 5);
        assert_eq!(contrast_brightness(&img, 1.0, 0.0), img);
        assert_eq!(gamma_contrast(&img, 1.0).unwrap(), img);
        assert!(gamma_contrast(&img, 0.0).is_err());
    }

    #[test]
    fn ycbcr_round_trip() {
        for p in colorful(16, 16).pixels() {
            let (cb, cr) = chroma(p);
            let back = from_ycbcr(luma(p), cb, cr);
            for c in 0..3 {
                assert!((p[c] as i32 - back[c] as i32).abs() <= 1);
            }
        }
    }
}
