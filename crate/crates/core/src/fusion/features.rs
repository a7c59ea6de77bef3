//! Standardized head activations and their on-disk store.
//!
//! A feature store is a binary `FMX1` file (magic, `u32` rows, `u32` cols,
//! then `f32` little-endian row-major values) plus a JSON sidecar at
//! `<file>.json` with the row metadata and normalization statistics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::head::HeadModel;
use crate::dataset::Split;
use crate::{Error, Result, Tensor};

const MAGIC: &[u8; 4] = b"FMX1";

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    /// Population mean and standard deviation of each column. Constant
    /// columns get a unit std so they map to zero.
    pub fn fit(x: &Tensor<f32>) -> Result<Self> {
        let (n, d) = x.dims2()?;
        if n == 0 {
            return Err(Error::Dimension("cannot fit normalization on zero rows".into()));
        }
        let mut sum = vec![0f64; d];
        for i in 0..n {
            for (s, &v) in sum.iter_mut().zip(x.row(i)) {
                *s += v as f64;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0f64; d];
        for i in 0..n {
            for ((s, &v), m) in sq.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd as f32
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        })
    }

    pub fn apply(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (n, d) = x.dims2()?;
        if d != self.mean.len() {
            return Err(Error::Dimension(format!(
                "normalization fitted on {} dims, input has {d}",
                self.mean.len()
            )));
        }
        let mut out = x.clone();
        for i in 0..n {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Standardized features of one backbone on one split. Row `i` belongs to
/// manifest row `sample_ids[i]` with class `labels[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub backbone_id: String,
    pub split: Split,
    pub rows: Tensor<f32>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<usize>,
    pub label_list: Vec<String>,
    pub normalization: Normalization,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    backbone_id: String,
    split: Split,
    label_list: Vec<String>,
    labels: Vec<usize>,
    sample_ids: Vec<usize>,
    normalization: Normalization,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    crate::dataset::sidecar_path(path)
}

impl FeatureMatrix {
    pub fn new(
        backbone_id: &str,
        split: Split,
        rows: Tensor<f32>,
        labels: Vec<usize>,
        sample_ids: Vec<usize>,
        label_list: Vec<String>,
        normalization: Normalization,
    ) -> Result<Self> {
        let (n, d) = rows.dims2()?;
        if labels.len() != n || sample_ids.len() != n {
            return Err(Error::Dimension(format!(
                "{n} feature rows, {} labels, {} sample ids",
                labels.len(),
                sample_ids.len()
            )));
        }
        if normalization.mean.len() != d || normalization.std.len() != d {
            return Err(Error::Dimension(format!(
                "normalization has {} dims, features have {d}",
                normalization.mean.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= label_list.len()) {
            return Err(Error::InvalidLabel(format!("label {l} with {} classes", label_list.len())));
        }
        rows.check_finite("feature matrix")?;
        Ok(Self {
            backbone_id: backbone_id.to_string(),
            split,
            rows,
            labels,
            sample_ids,
            label_list,
            normalization,
        })
    }

    pub fn width(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, d) = self.rows.dims2().expect("rank-2 rows");
        let mut out = Vec::with_capacity(12 + 4 * n * d);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for v in self.rows.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let side = Sidecar {
            backbone_id: self.backbone_id.clone(),
            split: self.split,
            label_list: self.label_list.clone(),
            labels: self.labels.clone(),
            sample_ids: self.sample_ids.clone(),
            normalization: self.normalization.clone(),
        };
        let sp = sidecar_path(path);
        std::fs::write(&sp, serde_json::to_vec_pretty(&side)?).map_err(|e| Error::io(sp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let rows = read_fmx(&bytes)?;
        let sp = sidecar_path(path);
        let side: Sidecar =
            serde_json::from_slice(&std::fs::read(&sp).map_err(|e| Error::io(&sp, e))?)?;
        Self::new(
            &side.backbone_id,
            side.split,
            rows,
            side.labels,
            side.sample_ids,
            side.label_list,
            side.normalization,
        )
    }
}

/// Decodes the tensor payload of an `FMX1` file.
pub fn read_fmx(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not an FMX1 feature store".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[12..];
    if payload.len() != 4 * n * d {
        return Err(Error::Format(format!(
            "FMX1 header says {n}x{d}, payload holds {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(vec![n, d], data)
}

/// Head activations for one split, standardized with `normalization`
/// (fitted on the training split's activations).
pub fn extract_features(
    head: &HeadModel,
    trunk_features: &Tensor<f32>,
    split: Split,
    labels: Vec<usize>,
    sample_ids: Vec<usize>,
    label_list: Vec<String>,
    normalization: &Normalization,
) -> Result<FeatureMatrix> {
    let raw = head.activations(trunk_features)?;
    FeatureMatrix::new(
        &head.backbone_id,
        split,
        normalization.apply(&raw)?,
        labels,
        sample_ids,
        label_list,
        normalization.clone(),
    )
}

/// Row-wise concatenation in the given order. All matrices must describe
/// the same samples in the same order.
pub fn concat_features(mats: &[&FeatureMatrix]) -> Result<Tensor<f32>> {
    let first = mats
        .first()
        .ok_or_else(|| Error::Alignment("no feature matrices to concatenate".into()))?;
    for m in &mats[1..] {
        if m.len() != first.len() {
            return Err(Error::Alignment(format!(
                "{} has {} rows, {} has {}",
                first.backbone_id,
                first.len(),
                m.backbone_id,
                m.len()
            )));
        }
        if m.sample_ids != first.sample_ids || m.labels != first.labels {
            return Err(Error::Alignment(format!(
                "row order of {} differs from {}",
                m.backbone_id, first.backbone_id
            )));
        }
    }
    let widths: Vec<usize> = mats.iter().map(|m| m.width()).collect();
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(first.len() * total);
    for i in 0..first.len() {
        for m in mats {
            data.extend_from_slice(m.rows.row(i));
        }
    }
    Tensor::new(vec![first.len(), total], data)
}
