use image::{GrayImage, Luma, RgbImage};

use super::color::{chroma, from_ycbcr, luma};
use crate::{Error, Result};

pub const DEFAULT_TILES: (u32, u32) = (8, 8);
pub const DEFAULT_CLIP_LIMIT: f64 = 2.0;

/// Tile boundaries along one axis: `n` nearly equal spans covering `len`.
fn spans(len: u32, n: u32) -> Vec<(u32, u32)> {
    (0..n)
        .map(|i| ((i as u64 * len as u64 / n as u64) as u32, ((i as u64 + 1) * len as u64 / n as u64) as u32))
        .collect()
}

/// Equalization mapping for one tile. The histogram is clipped at
/// `clip_limit · area / 256` counts (at least 1), the excess spread evenly
/// over all bins, and the CDF rescaled so its first occupied bin maps to 0.
fn tile_lut(hist: &[u32; 256], area: u32, clip_limit: f64) -> [u8; 256] {
    let mut identity = [0u8; 256];
    for (v, slot) in identity.iter_mut().enumerate() {
        *slot = v as u8;
    }
    if hist.iter().filter(|&&h| h > 0).count() <= 1 {
        return identity;
    }
    let limit = (clip_limit * area as f64 / 256.0).floor().clamp(1.0, u32::MAX as f64) as u32;
    let mut h = *hist;
    let mut excess = 0u32;
    for b in h.iter_mut() {
        if *b > limit {
            excess += *b - limit;
            *b = limit;
        }
    }
    let (each, residual) = (excess / 256, excess % 256);
    for b in h.iter_mut() {
        *b += each;
    }
    if residual > 0 {
        let step = (256 / residual).max(1) as usize;
        for b in h.iter_mut().step_by(step).take(residual as usize) {
            *b += 1;
        }
    }
    let mut cdf = [0u32; 256];
    let mut acc = 0;
    for (v, &b) in h.iter().enumerate() {
        acc += b;
        cdf[v] = acc;
    }
    let first = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if acc == first {
        return identity;
    }
    let mut lut = [0u8; 256];
    for v in 0..256 {
        let num = cdf[v].saturating_sub(first) as f64;
        lut[v] = (num * 255.0 / (acc - first) as f64).round().clamp(0.0, 255.0) as u8;
    }
    lut
}

/// Interpolation neighbors and weight of the second one for coordinate `p`
/// between tile centers.
fn neighbors(p: u32, centers: &[f64]) -> (usize, usize, f64) {
    let p = p as f64;
    let last = centers.len() - 1;
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.iter().rposition(|&c| c <= p).unwrap_or(0);
    (i, i + 1, (p - centers[i]) / (centers[i + 1] - centers[i]))
}

/// Contrast-limited adaptive histogram equalization of a single channel.
/// `tiles` is `(columns, rows)`. Tiles whose histogram has a single
/// occupied bin keep their values.
pub fn clahe_gray(img: &GrayImage, tiles: (u32, u32), clip_limit: f64) -> Result<GrayImage> {
    let (tx, ty) = tiles;
    if tx == 0 || ty == 0 || !(clip_limit > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "CLAHE needs at least one tile per axis and a positive clip limit, got {tiles:?}, {clip_limit}"
        )));
    }
    let (w, h) = img.dimensions();
    if w < tx || h < ty {
        return Err(Error::InvalidParameter(format!(
            "{w}×{h} image is smaller than the {tx}×{ty} tile grid"
        )));
    }
    let (xs, ys) = (spans(w, tx), spans(h, ty));
    let mut luts = Vec::with_capacity((tx * ty) as usize);
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            let mut hist = [0u32; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[img.get_pixel(x, y)[0] as usize] += 1;
                }
            }
            luts.push(tile_lut(&hist, (x1 - x0) * (y1 - y0), clip_limit));
        }
    }
    let center = |s: &(u32, u32)| (s.0 + s.1 - 1) as f64 / 2.0;
    let (cx, cy): (Vec<f64>, Vec<f64>) = (xs.iter().map(center).collect(), ys.iter().map(center).collect());
    let col: Vec<_> = (0..w).map(|x| neighbors(x, &cx)).collect();
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let v = img.get_pixel(x, y)[0] as usize;
        let (r0, r1, fy) = neighbors(y, &cy);
        let (c0, c1, fx) = col[x as usize];
        let at = |r: usize, c: usize| luts[r * tx as usize + c][v] as f64;
        let top = at(r0, c0) * (1.0 - fx) + at(r0, c1) * fx;
        let bottom = at(r1, c0) * (1.0 - fx) + at(r1, c1) * fx;
        Luma([(top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8])
    }))
}

/// CLAHE on the luminance (Y of YCbCr); chroma is carried through.
pub fn clahe(img: &RgbImage, tiles: (u32, u32), clip_limit: f64) -> Result<RgbImage> {
    let y = GrayImage::from_fn(img.width(), img.height(), |x, yy| {
        Luma([luma(img.get_pixel(x, yy)).round().clamp(0.0, 255.0) as u8])
    });
    let eq = clahe_gray(&y, tiles, clip_limit)?;
    Ok(RgbImage::from_fn(img.width(), img.height(), |x, yy| {
        let (cb, cr) = chroma(img.get_pixel(x, yy));
        from_ycbcr(eq.get_pixel(x, yy)[0] as f64, cb, cr)
    }))
}

/// CLAHE applied to each RGB channel independently.
pub fn all_channel_clahe(img: &RgbImage, tiles: (u32, u32), clip_limit: f64) -> Result<RgbImage> {
    let mut out = img.clone();
    for c in 0..3 {
        let ch = GrayImage::from_fn(img.width(), img.height(), |x, y| Luma([img.get_pixel(x, y)[c]]));
        let eq = clahe_gray(&ch, tiles, clip_limit)?;
        for (p, q) in out.pixels_mut().zip(eq.pixels()) {
            p[c] = q[0];
        }
    }
    Ok(out)
}
