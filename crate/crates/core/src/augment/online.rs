use image::RgbImage;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::geometry::{affine, to_u8, AffineParams};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Per-epoch random transforms. Out-of-bounds pixels take the nearest edge
/// value. Brightness multiplies every channel; channel shift adds one
/// offset drawn from `±channel_shift_range` to all channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineAugConfig {
    pub rotation_deg: f64,
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub brightness_range: Option<(f64, f64)>,
    pub channel_shift: bool,
    pub channel_shift_range: f64,
    pub featurewise_center: bool,
}

impl Default for OnlineAugConfig {
    fn default() -> Self {
        Self {
            rotation_deg: 5.0,
            horizontal_flip: true,
            vertical_flip: true,
            brightness_range: Some((0.5, 1.3)),
            channel_shift: true,
            channel_shift_range: 20.0,
            featurewise_center: false,
        }
    }
}

impl OnlineAugConfig {
    pub fn disabled() -> Self {
        Self {
            rotation_deg: 0.0,
            horizontal_flip: false,
            vertical_flip: false,
            brightness_range: None,
            channel_shift: false,
            channel_shift_range: 0.0,
            featurewise_center: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rotation_deg >= 0.0) || !(self.channel_shift_range >= 0.0) {
            return Err(Error::InvalidParameter("rotation and channel shift ranges must be ≥ 0".into()));
        }
        if let Some((lo, hi)) = self.brightness_range {
            if !(0.0 <= lo && lo < hi) {
                return Err(Error::InvalidParameter(format!("brightness range [{lo}, {hi}] is invalid")));
            }
        }
        if self.featurewise_center {
            return Err(Error::InvalidParameter("featurewise centering is not supported".into()));
        }
        Ok(())
    }
}

/// Transforms one image with the stream keyed by `(epoch_seed, sample)`.
pub fn online_augment_one(img: &RgbImage, cfg: &OnlineAugConfig, epoch_seed: u64, sample: usize) -> Result<RgbImage> {
    let mut rng = rng_for(epoch_seed, &[sample as u64]);
    let rotation = if cfg.rotation_deg > 0.0 {
        rng.random_range(-cfg.rotation_deg..=cfg.rotation_deg)
    } else {
        0.0
    };
    let params = AffineParams {
        rotation_deg: rotation,
        flip_h: cfg.horizontal_flip && rng.random_bool(0.5),
        flip_v: cfg.vertical_flip && rng.random_bool(0.5),
        ..AffineParams::default()
    };
    let mut out = if params == AffineParams::default() {
        img.clone()
    } else {
        affine(img, &params)?
    };
    let shift = if cfg.channel_shift && cfg.channel_shift_range > 0.0 {
        rng.random_range(-cfg.channel_shift_range..=cfg.channel_shift_range)
    } else {
        0.0
    };
    let gain = match cfg.brightness_range {
        Some((lo, hi)) => rng.random_range(lo..=hi),
        None => 1.0,
    };
    if shift != 0.0 || gain != 1.0 {
        for c in out.iter_mut() {
            let shifted = (*c as f64 + shift).clamp(0.0, 255.0);
            *c = to_u8(shifted * gain);
        }
    }
    Ok(out)
}

/// Transforms a batch; `indices[i]` identifies `batch[i]` in the dataset.
pub fn online_augment(batch: &[RgbImage], indices: &[usize], cfg: &OnlineAugConfig, epoch_seed: u64) -> Result<Vec<RgbImage>> {
    cfg.validate()?;
    if batch.len() != indices.len() {
        return Err(Error::Dimension(format!("{} images vs {} indices", batch.len(), indices.len())));
    }
    batch
        .iter()
        .zip(indices)
        .map(|(img, &i)| online_augment_one(img, cfg, epoch_seed, i))
        .collect()
}
