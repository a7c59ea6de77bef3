//! Per-trunk heads, standardized feature matrices, the fusion classifier
//! over concatenated features, and late fusion by majority vote.

mod features;
mod hdff;
mod head;
mod train;
mod vote;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use features::{concat_features, extract_features, read_fmx, FeatureMatrix, Normalization};
pub use hdff::{train_fusion, FusionMeta, FusionModel, FUSION_DROPOUT};
pub use head::{train_head, train_head_with, HeadMeta, HeadModel, FEATURE_DIM};
pub use train::{argmax_rows, train_network, EpochStats, Phase, Schedule, TrainHistory};
pub use vote::majority_vote;

use crate::dataset::sidecar_path;
use crate::nn::{load_checkpoint, save_checkpoint, softmax, Layer, Network};
use crate::{Error, Result, Tensor};

/// A trained softmax classifier over feature rows.
pub trait Classifier {
    fn network(&self) -> &Network<f32>;
    fn is_trained(&self) -> bool;
    fn class_count(&self) -> usize;

    fn input_dim(&self) -> usize {
        match self.network().layers().first() {
            Some(Layer::BatchNorm(p)) => p.dim(),
            Some(Layer::Dense(p)) => p.in_dim(),
            _ => 0,
        }
    }

    fn check_width(&self, x: &Tensor<f32>) -> Result<()> {
        let (_, d) = x.dims2()?;
        if d != self.input_dim() {
            return Err(Error::Dimension(format!("model expects {} input columns, got {d}", self.input_dim())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[N × C]` softmax probabilities.
    pub probs: Tensor<f32>,
    pub labels: Vec<usize>,
}

/// Inference-mode probabilities and argmax labels. Rows are independent,
/// so results do not depend on how inputs are batched.
pub fn predict<M: Classifier>(model: &M, x: &Tensor<f32>) -> Result<Prediction> {
    if !model.is_trained() {
        return Err(Error::State("model must be trained before prediction".into()));
    }
    model.check_width(x)?;
    let probs = softmax(&model.network().predict(x)?)?;
    probs.check_finite("predicted probabilities")?;
    let labels = argmax_rows(&probs);
    Ok(Prediction { probs, labels })
}

/// Predictions of several models on the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub probs: Vec<Tensor<f32>>,
    pub labels: Vec<Vec<usize>>,
    pub truth: Vec<usize>,
}

impl PredictionSet {
    pub fn new(predictions: Vec<Prediction>, truth: Vec<usize>) -> Result<Self> {
        for p in &predictions {
            if p.labels.len() != truth.len() {
                return Err(Error::Dimension(format!(
                    "prediction has {} rows, truth has {}",
                    p.labels.len(),
                    truth.len()
                )));
            }
            let (n, _) = p.probs.dims2()?;
            for i in 0..n {
                let s: f64 = p.probs.row(i).iter().map(|&v| v as f64).sum();
                if (s - 1.0).abs() > 1e-4 {
                    return Err(Error::InvalidParameter(format!("probability row {i} sums to {s}")));
                }
            }
        }
        let (probs, labels) = predictions.into_iter().map(|p| (p.probs, p.labels)).unzip();
        Ok(Self { probs, labels, truth })
    }

    pub fn late_fusion(&self) -> Result<Vec<usize>> {
        majority_vote(&self.labels, &self.probs)
    }
}

pub(crate) fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(l) => Err(Error::InvalidLabel(format!("label {l} with {classes} classes"))),
        None => Ok(()),
    }
}

fn save_model<M: Serialize>(path: &Path, net: &Network<f32>, meta: &M) -> Result<()> {
    save_checkpoint(path, &net.named_tensors())?;
    let sp = sidecar_path(path);
    std::fs::write(&sp, serde_json::to_vec_pretty(meta)?).map_err(|e| Error::io(sp, e))
}

fn load_model<M: DeserializeOwned>(path: &Path) -> Result<(M, Vec<(String, Tensor<f32>)>)> {
    let sp = sidecar_path(path);
    let meta = serde_json::from_slice(&std::fs::read(&sp).map_err(|e| Error::io(&sp, e))?)?;
    Ok((meta, load_checkpoint(path)?))
}

/// Writes a `CFCK` checkpoint at `path` and its metadata at `<path>.json`.
pub fn save_head(head: &HeadModel, path: &Path) -> Result<()> {
    save_model(path, head.network(), &head.meta())
}

pub fn load_head(path: &Path) -> Result<HeadModel> {
    let (meta, tensors) = load_model(path)?;
    HeadModel::from_parts(meta, tensors)
}

pub fn save_fusion(model: &FusionModel, path: &Path) -> Result<()> {
    save_model(path, model.network(), &model.meta())
}

pub fn load_fusion(path: &Path) -> Result<FusionModel> {
    let (meta, tensors) = load_model(path)?;
    FusionModel::from_parts(meta, tensors)
}
