use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::color::{channel_shuffle, contrast_brightness, gamma_contrast, grayscale, hue_saturation, quantize};
use super::edges::{canny, directed_edge_detect, edge_detect};
use super::geometry::{affine, to_u8, AffineParams};
use super::histogram::{all_channel_clahe, clahe, DEFAULT_CLIP_LIMIT, DEFAULT_TILES};
use crate::dataset::{ImageSample, Manifest, Origin, Split};
use crate::rng::{rng_for, Rng};
use crate::{Error, Result};

/// Closed interval `[lo, hi]` a parameter is drawn from uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn validate(&self, what: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite() && self.0 <= self.1) {
            return Err(Error::InvalidParameter(format!("{what} range [{}, {}] is invalid", self.0, self.1)));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugOp {
    /// Translation is a fraction of the image size.
    Affine {
        rotation_deg: Range,
        scale: Range,
        translate: Range,
        shear_deg: Range,
    },
    Clahe {
        tiles: (u32, u32),
        clip_limit: Range,
    },
    AllChannelClahe {
        tiles: (u32, u32),
        clip_limit: Range,
    },
    GammaContrast {
        gamma: Range,
    },
    EdgeDetect {
        alpha: Range,
    },
    DirectedEdgeDetect {
        alpha: Range,
        direction_deg: Range,
    },
    /// The binary edge map is blended over the image with weight `alpha`.
    Canny {
        alpha: Range,
        low: f64,
        high: f64,
    },
    ChannelShuffle,
    Grayscale {
        alpha: Range,
    },
    HueSaturation {
        hue_deg: Range,
        saturation: Range,
    },
    ColorQuantize {
        colors: (usize, usize),
    },
    ContrastBrightness {
        contrast: Range,
        brightness: Range,
    },
}

impl AugOp {
    pub fn validate(&self) -> Result<()> {
        match self {
            AugOp::Affine {
                rotation_deg,
                scale,
                translate,
                shear_deg,
            } => {
                rotation_deg.validate("rotation")?;
                scale.validate("scale")?;
                translate.validate("translation")?;
                shear_deg.validate("shear")?;
                if scale.0 <= 0.0 {
                    return Err(Error::InvalidParameter("affine scale must be positive".into()));
                }
                if shear_deg.0.abs().max(shear_deg.1.abs()) >= 90.0 {
                    return Err(Error::InvalidParameter("shear must stay below 90°".into()));
                }
            }
            AugOp::Clahe { tiles, clip_limit } | AugOp::AllChannelClahe { tiles, clip_limit } => {
                clip_limit.validate("clip limit")?;
                if tiles.0 == 0 || tiles.1 == 0 || clip_limit.0 <= 0.0 {
                    return Err(Error::InvalidParameter("CLAHE tiles and clip limit must be positive".into()));
                }
            }
            AugOp::GammaContrast { gamma } => {
                gamma.validate("gamma")?;
                if gamma.0 <= 0.0 {
                    return Err(Error::InvalidParameter("gamma must be positive".into()));
                }
            }
            AugOp::EdgeDetect { alpha } | AugOp::Grayscale { alpha } => alpha.validate("alpha")?,
            AugOp::DirectedEdgeDetect { alpha, direction_deg } => {
                alpha.validate("alpha")?;
                direction_deg.validate("direction")?;
            }
            AugOp::Canny { alpha, low, high } => {
                alpha.validate("alpha")?;
                if !(0.0 <= *low && low < high) {
                    return Err(Error::InvalidParameter("canny needs 0 ≤ low < high".into()));
                }
            }
            AugOp::ChannelShuffle => {}
            AugOp::HueSaturation { hue_deg, saturation } => {
                hue_deg.validate("hue")?;
                saturation.validate("saturation")?;
            }
            AugOp::ColorQuantize { colors } => {
                if !(2 <= colors.0 && colors.0 <= colors.1 && colors.1 <= 16) {
                    return Err(Error::InvalidParameter("palette sizes must lie in [2, 16]".into()));
                }
            }
            AugOp::ContrastBrightness { contrast, brightness } => {
                contrast.validate("contrast")?;
                brightness.validate("brightness")?;
            }
        }
        if let AugOp::EdgeDetect { alpha }
        | AugOp::Grayscale { alpha }
        | AugOp::DirectedEdgeDetect { alpha, .. }
        | AugOp::Canny { alpha, .. } = self
        {
            if alpha.0 < 0.0 || alpha.1 > 1.0 {
                return Err(Error::InvalidParameter("alpha must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Draws this op's parameters from `rng` and applies it.
    pub fn apply(&self, img: &RgbImage, rng: &mut Rng) -> Result<RgbImage> {
        match self {
            AugOp::Affine {
                rotation_deg,
                scale,
                translate,
                shear_deg,
            } => {
                let p = AffineParams {
                    rotation_deg: rotation_deg.sample(rng),
                    scale: scale.sample(rng),
                    tx: translate.sample(rng) * img.width() as f64,
                    ty: translate.sample(rng) * img.height() as f64,
                    shear_deg: shear_deg.sample(rng),
                    flip_h: false,
                    flip_v: false,
                };
                affine(img, &p)
            }
            AugOp::Clahe { tiles, clip_limit } => clahe(img, fit_tiles(img, *tiles), clip_limit.sample(rng)),
            AugOp::AllChannelClahe { tiles, clip_limit } => {
                all_channel_clahe(img, fit_tiles(img, *tiles), clip_limit.sample(rng))
            }
            AugOp::GammaContrast { gamma } => gamma_contrast(img, gamma.sample(rng)),
            AugOp::EdgeDetect { alpha } => edge_detect(img, alpha.sample(rng)),
            AugOp::DirectedEdgeDetect { alpha, direction_deg } => {
                let a = alpha.sample(rng);
                directed_edge_detect(img, a, direction_deg.sample(rng))
            }
            AugOp::Canny { alpha, low, high } => {
                let a = alpha.sample(rng);
                let edges = canny(img, *low, *high)?;
                let mut out = img.clone();
                for (p, e) in out.pixels_mut().zip(edges.pixels()) {
                    for c in p.0.iter_mut() {
                        *c = to_u8((1.0 - a) * *c as f64 + a * e[0] as f64);
                    }
                }
                Ok(out)
            }
            AugOp::ChannelShuffle => {
                let mut perm = [0, 1, 2];
                for i in (1..3).rev() {
                    perm.swap(i, rng.random_range(0..=i));
                }
                channel_shuffle(img, perm)
            }
            AugOp::Grayscale { alpha } => Ok(grayscale(img, alpha.sample(rng))),
            AugOp::HueSaturation { hue_deg, saturation } => {
                let h = hue_deg.sample(rng);
                Ok(hue_saturation(img, h, saturation.sample(rng)))
            }
            AugOp::ColorQuantize { colors } => quantize(img, rng.random_range(colors.0..=colors.1)),
            AugOp::ContrastBrightness { contrast, brightness } => {
                let c = contrast.sample(rng);
                Ok(contrast_brightness(img, c, brightness.sample(rng)))
            }
        }
    }
}

/// Shrinks the tile grid for images smaller than it.
fn fit_tiles(img: &RgbImage, tiles: (u32, u32)) -> (u32, u32) {
    (tiles.0.min(img.width()).max(1), tiles.1.min(img.height()).max(1))
}

/// One op is drawn uniformly from `ops`; the group fires with `probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugGroup {
    pub name: String,
    pub probability: f64,
    pub ops: Vec<AugOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugPipeline {
    pub groups: Vec<AugGroup>,
    pub copies_per_image: usize,
    pub master_seed: u64,
}

pub const OPTIONAL_GROUP_PROBABILITY: f64 = 0.3;

impl AugPipeline {
    /// Affine and CLAHE-family groups always fire; edge, color and contrast
    /// groups fire with probability 0.3 each.
    pub fn standard(copies_per_image: usize, master_seed: u64) -> Self {
        let group = |name: &str, probability: f64, ops: Vec<AugOp>| AugGroup {
            name: name.into(),
            probability,
            ops,
        };
        let p = OPTIONAL_GROUP_PROBABILITY;
        Self {
            groups: vec![
                group(
                    "affine",
                    1.0,
                    vec![AugOp::Affine {
                        rotation_deg: Range(-25.0, 25.0),
                        scale: Range(0.8, 1.2),
                        translate: Range(-0.1, 0.1),
                        shear_deg: Range(-16.0, 16.0),
                    }],
                ),
                group(
                    "clahe",
                    1.0,
                    vec![
                        AugOp::Clahe {
                            tiles: DEFAULT_TILES,
                            clip_limit: Range(1.0, DEFAULT_CLIP_LIMIT),
                        },
                        AugOp::AllChannelClahe {
                            tiles: DEFAULT_TILES,
                            clip_limit: Range(1.0, DEFAULT_CLIP_LIMIT),
                        },
                    ],
                ),
                group(
                    "edges",
                    p,
                    vec![
                        AugOp::EdgeDetect { alpha: Range(0.0, 0.5) },
                        AugOp::DirectedEdgeDetect {
                            alpha: Range(0.0, 0.5),
                            direction_deg: Range(0.0, 360.0),
                        },
                        AugOp::Canny {
                            alpha: Range(0.0, 0.5),
                            low: super::edges::CANNY_LOW,
                            high: super::edges::CANNY_HIGH,
                        },
                    ],
                ),
                group(
                    "color",
                    p,
                    vec![
                        AugOp::ChannelShuffle,
                        AugOp::Grayscale { alpha: Range(0.0, 1.0) },
                        AugOp::HueSaturation {
                            hue_deg: Range(-30.0, 30.0),
                            saturation: Range(0.5, 1.5),
                        },
                        AugOp::ColorQuantize { colors: (8, 16) },
                    ],
                ),
                group(
                    "contrast",
                    p,
                    vec![
                        AugOp::GammaContrast { gamma: Range(0.5, 2.0) },
                        AugOp::ContrastBrightness {
                            contrast: Range(0.75, 1.5),
                            brightness: Range(-30.0, 30.0),
                        },
                    ],
                ),
            ],
            copies_per_image,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.groups {
            if !(0.0..=1.0).contains(&g.probability) || g.ops.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "augmentation group {} needs ops and a probability in [0, 1]",
                    g.name
                )));
            }
            g.ops.iter().try_for_each(AugOp::validate)?;
        }
        Ok(())
    }

    /// Copy `copy` of sample `sample`; a pure function of the seed and the
    /// two indices.
    pub fn augment(&self, img: &RgbImage, sample: usize, copy: usize) -> Result<RgbImage> {
        let mut rng = rng_for(self.master_seed, &[sample as u64, copy as u64]);
        let mut out = img.clone();
        for g in &self.groups {
            if g.probability < 1.0 && rng.random::<f64>() >= g.probability {
                continue;
            }
            let op = &g.ops[rng.random_range(0..g.ops.len())];
            out = op.apply(&out, &mut rng)?;
        }
        Ok(out)
    }
}

pub fn augmented_name(stem: &str, copy: usize) -> String {
    format!("{stem}__aug{copy}.png")
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes `copies_per_image` augmented PNGs per training original under
/// `out_dir/<raw_label>/` and returns the manifest with their rows
/// appended. Validation and test rows are left alone.
pub fn generate_offline(manifest: &Manifest, pipeline: &AugPipeline, out_dir: &Path) -> Result<Manifest> {
    pipeline.validate()?;
    let mut out = manifest.clone();
    if pipeline.copies_per_image == 0 {
        return Ok(out);
    }
    for (i, row) in manifest.rows.iter().enumerate() {
        if row.split != Split::Train || row.origin != Origin::Original {
            continue;
        }
        let src = Path::new(&row.path);
        let img = load_rgb(src)?;
        let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let dir: PathBuf = out_dir.join(&row.raw_label);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for k in 1..=pipeline.copies_per_image {
            let aug = pipeline.augment(&img, i, k)?;
            let path = dir.join(augmented_name(stem, k));
            aug.save(&path)?;
            out.rows.push(ImageSample {
                path: path.to_string_lossy().into_owned(),
                raw_label: row.raw_label.clone(),
                mapped_label: row.mapped_label,
                split: Split::Train,
                origin: Origin::Augmented,
                source_index: i,
            });
        }
    }
    out.check_unique_paths()?;
    Ok(out)
}
