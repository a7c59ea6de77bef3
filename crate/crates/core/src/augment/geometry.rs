use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameters of one affine warp about the image center. Translation is in
/// pixels; angles in degrees, positive rotation is counterclockwise as
/// displayed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub rotation_deg: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
    pub shear_deg: f64,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl Default for AffineParams {
    fn default() -> Self {
        Self {
            rotation_deg: 0.0,
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
            shear_deg: 0.0,
            flip_h: false,
            flip_v: false,
        }
    }
}

impl AffineParams {
    pub fn rotation(deg: f64) -> Self {
        Self {
            rotation_deg: deg,
            ..Self::default()
        }
    }

    /// Forward 2×2 linear part: rotation · shear · scale · flip.
    fn linear(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let k = self.shear_deg.to_radians().tan();
        let fx = if self.flip_h { -self.scale } else { self.scale };
        let fy = if self.flip_v { -self.scale } else { self.scale };
        // rotation [[c, s], [-s, c]] times shear [[1, k], [0, 1]]
        let rs = [[c, c * k + s], [-s, -s * k + c]];
        [[rs[0][0] * fx, rs[0][1] * fy], [rs[1][0] * fx, rs[1][1] * fy]]
    }

    /// The composed 2×3 matrix `[a b tx'; c d ty']` mapping a source pixel
    /// `(x, y)` to its destination.
    pub fn matrix(&self, width: u32, height: u32) -> [[f64; 3]; 2] {
        let m = self.linear();
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        [
            [m[0][0], m[0][1], cx + self.tx - m[0][0] * cx - m[0][1] * cy],
            [m[1][0], m[1][1], cy + self.ty - m[1][0] * cx - m[1][1] * cy],
        ]
    }
}

/// Samples channel values at fractional `(x, y)`; coordinates outside the
/// image are clamped to the nearest edge pixel.
pub(crate) fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() < 1e-9 {
            r
        } else {
            v
        }
    };
    let (x, y) = (snap(x), snap(y));
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let px = |xi: i64, yi: i64| img.get_pixel(xi.clamp(0, w - 1) as u32, yi.clamp(0, h - 1) as u32).0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let (p00, p10, p01, p11) = (px(x0, y0), px(x0 + 1, y0), px(x0, y0 + 1), px(x0 + 1, y0 + 1));
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let top = p00[ch] as f64 * (1.0 - fx) + p10[ch] as f64 * fx;
        let bottom = p01[ch] as f64 * (1.0 - fx) + p11[ch] as f64 * fx;
        out[ch] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Warps `img` by `p` with bilinear sampling and edge replication.
pub fn affine(img: &RgbImage, p: &AffineParams) -> Result<RgbImage> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidParameter("affine on an empty image".into()));
    }
    let values = [p.rotation_deg, p.scale, p.tx, p.ty, p.shear_deg];
    if values.iter().any(|v| !v.is_finite()) || p.scale == 0.0 {
        return Err(Error::InvalidParameter(format!("invalid affine parameters {p:?}")));
    }
    if p.shear_deg.abs() >= 90.0 {
        return Err(Error::InvalidParameter(format!("shear {}° is degenerate", p.shear_deg)));
    }
    let m = p.matrix(img.width(), img.height());
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    Ok(RgbImage::from_fn(img.width(), img.height(), |xo, yo| {
        let dx = xo as f64 - m[0][2];
        let dy = yo as f64 - m[1][2];
        let xs = inv[0][0] * dx + inv[0][1] * dy;
        let ys = inv[1][0] * dx + inv[1][1] * dy;
        let v = sample_bilinear(img, xs, ys);
        Rgb([to_u8(v[0]), to_u8(v[1]), to_u8(v[2])])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(n: u32) -> RgbImage {
        RgbImage::from_fn(n, n, |x, y| Rgb([(x * 40 + y) as u8, (y * 50) as u8, ((x * y) % 251) as u8]))
    }

    #[test]
    fn identity_is_bit_exact() {
        let img = pattern(7);
        assert_eq!(affine(&img, &AffineParams::default()).unwrap(), img);
    }

    #[test]
    fn zero_scale_is_rejected() {
        let p = AffineParams {
            scale: 0.0,
            ..Default::default()
        };
        assert!(matches!(affine(&pattern(4), &p), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn double_flip_equals_half_turn() {
        let img = pattern(5);
        let flips = AffineParams {
            flip_h: true,
            flip_v: true,
            ..Default::default()
        };
        assert_eq!(affine(&img, &flips).unwrap(), affine(&img, &AffineParams::rotation(180.0)).unwrap());
    }

    #[test]
    fn integer_translation_shifts_and_replicates_edges() {
        let img = pattern(6);
        let p = AffineParams {
            tx: 2.0,
            ..Default::default()
        };
        let out = affine(&img, &p).unwrap();
        for y in 0..6 {
            for x in 0..6u32 {
                let src = x.saturating_sub(2);
                assert_eq!(out.get_pixel(x, y), img.get_pixel(src, y));
            }
        }
    }
}
