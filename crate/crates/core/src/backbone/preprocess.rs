use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    Rgb,
    Bgr,
}

/// Per-trunk input convention: bilinear resize to `input_size` (H, W),
/// channel reorder, then `(v · scale − mean) / std` per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub input_size: (u32, u32),
    pub channel_order: ChannelOrder,
    pub scale: f32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl PreprocessSpec {
    /// Raw pixel values at `input_size`.
    pub fn identity(input_size: (u32, u32)) -> Self {
        Self {
            input_size,
            channel_order: ChannelOrder::Rgb,
            scale: 1.0,
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::InvalidParameter("input size must be positive".into()));
        }
        if self.std.iter().any(|&s| !(s > 0.0)) || !self.scale.is_finite() || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "preprocessing needs finite scale/mean and std > 0, got std {:?}",
                self.std
            )));
        }
        Ok(())
    }
}

/// Bilinear resize with half-pixel centers, returning unrounded channel
/// values as `[H × W × 3]`.
pub fn resize_bilinear(img: &RgbImage, height: u32, width: u32) -> Result<Tensor<f32>> {
    let (w_in, h_in) = img.dimensions();
    if w_in == 0 || h_in == 0 || width == 0 || height == 0 {
        return Err(Error::InvalidParameter("cannot resize an empty image".into()));
    }
    let raw = img.as_raw();
    let px = |x: usize, y: usize, c: usize| raw[(y * w_in as usize + x) * 3 + c] as f32;
    let axis = |out: u32, len: u32| -> Vec<(usize, usize, f32)> {
        let ratio = len as f64 / out as f64;
        (0..out)
            .map(|o| {
                if out == len {
                    return (o as usize, o as usize, 0.0);
                }
                let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(len as usize - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let (xs, ys) = (axis(width, w_in), axis(height, h_in));
    let mut data = Vec::with_capacity((height * width * 3) as usize);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = px(x0, y0, c) * (1.0 - fx) + px(x1, y0, c) * fx;
                let bottom = px(x0, y1, c) * (1.0 - fx) + px(x1, y1, c) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![height as usize, width as usize, 3], data)
}

pub fn preprocess(img: &RgbImage, spec: &PreprocessSpec) -> Result<Tensor<f32>> {
    spec.validate()?;
    let (h, w) = spec.input_size;
    let mut t = resize_bilinear(img, h, w)?;
    for px in t.data_mut().chunks_exact_mut(3) {
        if spec.channel_order == ChannelOrder::Bgr {
            px.swap(0, 2);
        }
        for (c, v) in px.iter_mut().enumerate() {
            *v = (*v * spec.scale - spec.mean[c]) / spec.std[c];
        }
    }
    Ok(t)
}
