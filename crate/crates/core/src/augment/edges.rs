use image::{GrayImage, Luma, Rgb, RgbImage};

use super::color::luma;
use super::geometry::to_u8;
use crate::{Error, Result};

pub const CANNY_LOW: f64 = 50.0;
pub const CANNY_HIGH: f64 = 150.0;

/// Sobel derivatives of the luminance, divided by 4 so a full 0→255 step
/// has magnitude 255. Borders replicate the edge pixels.
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl Gradients {
    pub fn magnitude(&self, i: usize) -> f64 {
        self.gx[i].hypot(self.gy[i])
    }
}

pub fn sobel(img: &RgbImage) -> Gradients {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let l: Vec<f64> = img.pixels().map(luma).collect();
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        l[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = ((at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1)))
                / 4.0;
            gy[i] = ((at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1)))
                / 4.0;
        }
    }
    Gradients { width: w, height: h, gx, gy }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

fn blend(img: &RgbImage, response: impl Fn(usize) -> f64, alpha: f64) -> RgbImage {
    let w = img.width() as usize;
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let e = response(y as usize * w + x as usize).min(255.0);
        let p = img.get_pixel(x, y);
        Rgb(p.0.map(|c| to_u8((1.0 - alpha) * c as f64 + alpha * e)))
    })
}

/// Gradient-magnitude image blended over the input with weight `alpha`.
pub fn edge_detect(img: &RgbImage, alpha: f64) -> Result<RgbImage> {
    check_alpha(alpha)?;
    let g = sobel(img);
    Ok(blend(img, |i| g.magnitude(i), alpha))
}

/// Absolute derivative along `direction_deg` (0° points right, 90° down),
/// blended over the input with weight `alpha`.
pub fn directed_edge_detect(img: &RgbImage, alpha: f64, direction_deg: f64) -> Result<RgbImage> {
    check_alpha(alpha)?;
    let g = sobel(img);
    let (s, c) = direction_deg.to_radians().sin_cos();
    Ok(blend(img, |i| (g.gx[i] * c + g.gy[i] * s).abs(), alpha))
}

/// Binary edge map (0 or 255): Sobel gradients, non-maximum suppression
/// along the quantized gradient direction, then hysteresis between `low`
/// and `high`.
pub fn canny(img: &RgbImage, low: f64, high: f64) -> Result<GrayImage> {
    if !(0.0 <= low && low < high) {
        return Err(Error::InvalidParameter(format!("canny thresholds need 0 ≤ low < high, got {low}, {high}")));
    }
    let g = sobel(img);
    let (w, h) = (g.width, g.height);
    let mag: Vec<f64> = (0..w * h).map(|i| g.magnitude(i)).collect();
    let get = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let angle = g.gy[i].atan2(g.gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = match angle {
                a if !(22.5..157.5).contains(&a) => (1, 0),
                a if a < 67.5 => (1, 1),
                a if a < 112.5 => (0, 1),
                _ => (-1, 1),
            };
            let (xi, yi) = (x as isize, y as isize);
            let behind = get(xi - dx, yi - dy);
            let ahead = get(xi + dx, yi + dy);
            // Plateaus of equal magnitude keep only their far side, so a
            // step edge yields a one-pixel line.
            if m >= behind && m > ahead {
                thin[i] = m;
            }
        }
    }
    let mut out = GrayImage::new(w as u32, h as u32);
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= high).collect();
    for &i in &stack {
        out.put_pixel((i % w) as u32, (i / w) as u32, Luma([255]));
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                let p = out.get_pixel_mut(nx as u32, ny as u32);
                if p[0] == 0 && thin[j] >= low && thin[j] > 0.0 {
                    p[0] = 255;
                    stack.push(j);
                }
            }
        }
    }
    Ok(out)
}
