//! Synthetic cell-like images with a distinct color, nucleus shape, and
//! texture per class, laid out one directory per class.

use std::path::{Path, PathBuf};

use cervifuse_core::dataset::synthetic_labels;
use cervifuse_core::rng::rng_for;
use image::{Rgb, RgbImage};
use rand::Rng;

use crate::error::{CliError, CliResult};

pub const SYNTH_SIZE: u32 = 64;

const CYTOPLASM_COLORS: [[f64; 3]; 7] = [
    [230.0, 170.0, 190.0],
    [170.0, 210.0, 230.0],
    [230.0, 220.0, 150.0],
    [180.0, 230.0, 170.0],
    [210.0, 180.0, 240.0],
    [240.0, 190.0, 140.0],
    [200.0, 200.0, 200.0],
];

const NUCLEUS_COLORS: [[u8; 3]; 7] = [
    [40, 40, 170],
    [150, 30, 150],
    [180, 30, 30],
    [30, 120, 40],
    [25, 25, 25],
    [210, 120, 0],
    [0, 140, 160],
];

fn clamp(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Whether pixel offset `(dx, dy)` from the nucleus center lies on the
/// class's nucleus shape of nominal radius `r`.
fn in_nucleus(class: usize, dx: f64, dy: f64, r: f64) -> bool {
    let d = (dx * dx + dy * dy).sqrt();
    match class {
        0 => d <= r * 0.55,
        1 => d <= r * 1.1,
        2 => d <= r && d >= r * 0.6,
        3 => {
            let a = ((dx - r * 0.7).powi(2) + dy * dy).sqrt();
            let b = ((dx + r * 0.7).powi(2) + dy * dy).sqrt();
            a <= r * 0.45 || b <= r * 0.45
        }
        4 => dx.abs() <= r * 0.8 && dy.abs() <= r * 0.8,
        5 => (dx.abs() <= r * 0.25 && dy.abs() <= r) || (dy.abs() <= r * 0.25 && dx.abs() <= r),
        _ => {
            let (gx, gy) = ((dx / 5.0).round() * 5.0, (dy / 5.0).round() * 5.0);
            d <= r * 1.2 && (dx - gx).powi(2) + (dy - gy).powi(2) <= 2.5
        }
    }
}

pub fn synth_image(class: usize, index: usize, seed: u64) -> RgbImage {
    let mut rng = rng_for(seed, &[class as u64, index as u64]);
    let n = SYNTH_SIZE as f64;
    let (cx, cy) = (n / 2.0 + rng.random_range(-5.0..5.0), n / 2.0 + rng.random_range(-5.0..5.0));
    let (ax, ay) = (rng.random_range(20.0..26.0), rng.random_range(18.0..24.0));
    let r = rng.random_range(10.0..13.0);
    let nucleus = NUCLEUS_COLORS[class % NUCLEUS_COLORS.len()];
    let shade = rng.random_range(-15.0..15.0);
    // Stripe period inside the cytoplasm differs by class.
    let period = 3.0 + class as f64 * 1.5;
    let mut img = RgbImage::new(SYNTH_SIZE, SYNTH_SIZE);
    for y in 0..SYNTH_SIZE {
        for x in 0..SYNTH_SIZE {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let noise = rng.random_range(-4.0..4.0);
            let px = if in_nucleus(class, dx, dy, r) {
                nucleus.map(|c| clamp(c as f64 + shade * 0.5 + noise))
            } else if (dx / ax).powi(2) + (dy / ay).powi(2) <= 1.0 {
                let stripe = if ((dx + dy) / period).floor() as i64 % 2 == 0 { 12.0 } else { -12.0 };
                CYTOPLASM_COLORS[class % CYTOPLASM_COLORS.len()].map(|c| clamp(c + shade + stripe + noise))
            } else {
                [245.0, 235.0, 240.0].map(|c| clamp(c + noise))
            };
            img.put_pixel(x, y, Rgb(px));
        }
    }
    img
}

/// Writes `out_dir/class_<k>/img_<i>.png` for `n_per_class` images per class.
pub fn generate(out_dir: &Path, n_per_class: usize, classes: usize, seed: u64) -> CliResult<Vec<PathBuf>> {
    if !(2..=7).contains(&classes) {
        return Err(CliError::Validation(format!("class count must be in 2..=7, got {classes}")));
    }
    let mut written = Vec::with_capacity(n_per_class * classes);
    for (k, label) in synthetic_labels(classes).iter().enumerate() {
        let dir = out_dir.join(label);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for i in 0..n_per_class {
            let path = dir.join(format!("img_{i:03}.png"));
            synth_image(k, i, seed)
                .save(&path)
                .map_err(|e| CliError::Runtime(e.into()))?;
            written.push(path);
        }
    }
    Ok(written)
}
