//! Frozen feature trunks: a seeded toy residual CNN and ONNX interchange
//! files, their preprocessing, pooled feature extraction, and feature-map
//! dumps.

#[cfg(feature = "onnx")]
mod onnx;
mod preprocess;
mod toy;

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[cfg(feature = "onnx")]
pub use onnx::OnnxTrunk;
pub use preprocess::{preprocess, resize_bilinear, ChannelOrder, PreprocessSpec};
pub use toy::{global_max_pool, relu, residual_block, Conv3x3, ResidualWeights, ToyTrunk, TOY_CHANNELS};

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrunkSource {
    InterchangeFile { path: PathBuf },
    BuiltinToy { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub id: String,
    pub source: TrunkSource,
    pub preprocess: PreprocessSpec,
    pub output_dim: usize,
}

/// Sidecar `<model>.manifest.json` next to an interchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterchangeManifest {
    pub input_name: String,
    pub output_name: String,
    pub input_size: (u32, u32),
    pub channel_order: ChannelOrder,
    pub scale: f32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub output_dim: usize,
}

impl InterchangeManifest {
    /// `model.onnx` → `model.manifest.json`.
    pub fn path_for(model: &Path) -> PathBuf {
        model.with_extension("manifest.json")
    }

    pub fn load(model: &Path) -> Result<Self> {
        let path = Self::path_for(model);
        let bytes = std::fs::read(&path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        let m: Self = serde_json::from_slice(&bytes).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        m.preprocess().validate()?;
        if m.output_dim == 0 {
            return Err(Error::Load(format!("{}: output_dim must be positive", path.display())));
        }
        Ok(m)
    }

    pub fn preprocess(&self) -> PreprocessSpec {
        PreprocessSpec {
            input_size: self.input_size,
            channel_order: self.channel_order,
            scale: self.scale,
            mean: self.mean,
            std: self.std,
        }
    }
}

impl BackboneSpec {
    /// Toy trunk on raw pixels scaled to [0, 1].
    pub fn toy(id: &str, seed: u64, input_size: u32) -> Self {
        Self {
            id: id.into(),
            source: TrunkSource::BuiltinToy { seed },
            preprocess: PreprocessSpec {
                scale: 1.0 / 255.0,
                ..PreprocessSpec::identity((input_size, input_size))
            },
            output_dim: TOY_CHANNELS[2],
        }
    }

    /// Reads preprocessing and output width from the sidecar manifest.
    pub fn interchange(id: &str, path: &Path) -> Result<Self> {
        let m = InterchangeManifest::load(path)?;
        Ok(Self {
            id: id.into(),
            source: TrunkSource::InterchangeFile { path: path.to_path_buf() },
            preprocess: m.preprocess(),
            output_dim: m.output_dim,
        })
    }
}

#[derive(Debug)]
enum Trunk {
    Toy(ToyTrunk),
    #[cfg(feature = "onnx")]
    Onnx(OnnxTrunk, Vec<u8>),
}

/// A loaded, immutable trunk.
#[derive(Debug)]
pub struct Backbone {
    pub spec: BackboneSpec,
    trunk: Trunk,
}

impl Backbone {
    pub fn load(spec: &BackboneSpec) -> Result<Self> {
        spec.preprocess.validate()?;
        if spec.output_dim == 0 {
            return Err(Error::InvalidParameter(format!("backbone {} has output_dim 0", spec.id)));
        }
        let trunk = match &spec.source {
            TrunkSource::BuiltinToy { seed } => {
                let t = ToyTrunk::new(*seed);
                if t.output_dim() != spec.output_dim {
                    return Err(Error::InvalidParameter(format!(
                        "toy trunk yields {} features, spec says {}",
                        t.output_dim(),
                        spec.output_dim
                    )));
                }
                Trunk::Toy(t)
            }
            TrunkSource::InterchangeFile { path } => Self::load_interchange(spec, path)?,
        };
        Ok(Self {
            spec: spec.clone(),
            trunk,
        })
    }

    #[cfg(feature = "onnx")]
    fn load_interchange(spec: &BackboneSpec, path: &Path) -> Result<Trunk> {
        let manifest = InterchangeManifest::load(path)?;
        if manifest.input_size != spec.preprocess.input_size {
            return Err(Error::Load(format!(
                "{}: trunk declares input {:?}, spec uses {:?}",
                path.display(),
                manifest.input_size,
                spec.preprocess.input_size
            )));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        Ok(Trunk::Onnx(OnnxTrunk::load(path, &manifest)?, bytes))
    }

    #[cfg(not(feature = "onnx"))]
    fn load_interchange(_spec: &BackboneSpec, path: &Path) -> Result<Trunk> {
        Err(Error::Load(format!(
            "{}: interchange trunks need the `onnx` feature",
            path.display()
        )))
    }

    /// Pooled features of one preprocessed `[H, W, 3]` image.
    pub fn features(&self, x: &Tensor<f32>) -> Result<Vec<f32>> {
        let (h, w) = self.spec.preprocess.input_size;
        if x.shape() != [h as usize, w as usize, 3] {
            return Err(Error::Inference(format!(
                "backbone {} expects [{h}, {w}, 3], got {:?}",
                self.spec.id,
                x.shape()
            )));
        }
        let out = match &self.trunk {
            Trunk::Toy(t) => t.forward(x)?.into_data(),
            #[cfg(feature = "onnx")]
            Trunk::Onnx(t, _) => {
                let (shape, data) = t.run(x)?;
                match shape.len() {
                    1 => data,
                    3 => {
                        let hw = shape[1] * shape[2];
                        data.chunks_exact(hw.max(1))
                            .map(|ch| ch.iter().copied().fold(f32::NEG_INFINITY, f32::max))
                            .collect()
                    }
                    _ => return Err(Error::Inference(format!("unexpected trunk output shape {shape:?}"))),
                }
            }
        };
        if out.len() != self.spec.output_dim {
            return Err(Error::Inference(format!(
                "backbone {} produced {} features, declared {}",
                self.spec.id,
                out.len(),
                self.spec.output_dim
            )));
        }
        Ok(out)
    }

    /// Preprocesses and embeds each image; row `i` belongs to `images[i]`.
    pub fn embed(&self, images: &[RgbImage]) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(images.len() * self.spec.output_dim);
        for img in images {
            data.extend(self.features(&preprocess(img, &self.spec.preprocess)?)?);
        }
        let t = Tensor::new(vec![images.len(), self.spec.output_dim], data)?;
        t.check_finite("trunk features")?;
        Ok(t)
    }

    /// SHA-256 over the trunk parameters (toy) or file bytes (interchange).
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        match &self.trunk {
            Trunk::Toy(t) => {
                for p in t.parameters() {
                    for v in p.data() {
                        h.update(v.to_le_bytes());
                    }
                }
            }
            #[cfg(feature = "onnx")]
            Trunk::Onnx(_, bytes) => h.update(bytes),
        }
        hex(&h.finalize())
    }

    pub fn toy(&self) -> Option<&ToyTrunk> {
        match &self.trunk {
            Trunk::Toy(t) => Some(t),
            #[cfg(feature = "onnx")]
            Trunk::Onnx(..) => None,
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Batch form of [`Backbone::embed`] from a spec.
pub fn trunk_forward(spec: &BackboneSpec, batch: &[RgbImage]) -> Result<Tensor<f32>> {
    Backbone::load(spec)?.embed(batch)
}

/// Lays out the channels of an `[H, W, C]` map as a grid of grayscale
/// tiles, each min-max normalized (a flat channel renders black), with a
/// one-pixel gap.
pub fn feature_grid(map: &Tensor<f32>) -> Result<GrayImage> {
    let s = map.shape();
    if s.len() != 3 {
        return Err(Error::Dimension(format!("feature map must be [H, W, C], got {s:?}")));
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    let cols = (c as f64).sqrt().ceil() as usize;
    let rows = c.div_ceil(cols);
    let mut img = GrayImage::new(((w + 1) * cols - 1) as u32, ((h + 1) * rows - 1) as u32);
    for ch in 0..c {
        let vals: Vec<f32> = (0..h * w).map(|i| map.data()[i * c + ch]).collect();
        let (lo, hi) = vals.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (ox, oy) = ((ch % cols) * (w + 1), (ch / cols) * (h + 1));
        for (i, &v) in vals.iter().enumerate() {
            let g = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 0 };
            img.put_pixel((ox + i % w) as u32, (oy + i / w) as u32, Luma([g]));
        }
    }
    Ok(img)
}

/// Writes `stage<k>.png` for each requested stage (1-based) of a toy trunk.
pub fn dump_feature_maps(backbone: &Backbone, img: &RgbImage, stages: &[usize], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let trunk = backbone.toy().ok_or_else(|| {
        Error::InvalidParameter(format!("backbone {} exposes no intermediate stages", backbone.spec.id))
    })?;
    let valid = 1..=trunk.stages.len();
    if let Some(bad) = stages.iter().find(|s| !valid.contains(s)) {
        return Err(Error::InvalidParameter(format!(
            "invalid stage {bad}; valid stages are {:?}",
            valid.collect::<Vec<_>>()
        )));
    }
    let maps = trunk.stage_maps(&preprocess(img, &backbone.spec.preprocess)?)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    stages
        .iter()
        .map(|&s| {
            let path = out_dir.join(format!("stage{s}.png"));
            feature_grid(&maps[s - 1])?.save(&path)?;
            Ok(path)
        })
        .collect()
}
