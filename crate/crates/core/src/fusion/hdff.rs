use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::train::{train_network, Schedule, TrainHistory};
use super::{check_labels, Classifier};
use crate::nn::{Activation, BatchNormParams, DenseParams, Layer, Network};
use crate::rng::{derive_seed, Rng};
use crate::{Error, Result, Tensor};

pub const FUSION_DROPOUT: f64 = 0.5;

/// Classifier over concatenated feature blocks: BN → dropout → dense(C).
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    /// Order of the column blocks in the concatenated input.
    pub backbone_order: Vec<String>,
    pub block_dim: usize,
    pub class_count: usize,
    pub dropout_rate: f64,
    network: Network<f32>,
    trained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionMeta {
    pub backbone_order: Vec<String>,
    pub block_dim: usize,
    pub class_count: usize,
    pub dropout_rate: f64,
    pub trained: bool,
}

impl FusionModel {
    pub fn new(
        backbone_order: Vec<String>,
        block_dim: usize,
        class_count: usize,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if backbone_order.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "fusion needs at least 2 backbones, got {}",
                backbone_order.len()
            )));
        }
        if class_count < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 classes, got {class_count}")));
        }
        let input_dim = backbone_order.len() * block_dim;
        let mut rng = Rng::seed_from_u64(derive_seed(seed, &[0x4844_4646]));
        let network = Network::new(vec![
            Layer::BatchNorm(BatchNormParams::new(input_dim)),
            Layer::Dropout { rate: dropout_rate },
            Layer::Dense(DenseParams::glorot(input_dim, class_count, Activation::None, &mut rng)?),
        ])?;
        Ok(Self {
            backbone_order,
            block_dim,
            class_count,
            dropout_rate,
            network,
            trained: false,
        })
    }

    pub fn from_parts(meta: FusionMeta, tensors: Vec<(String, Tensor<f32>)>) -> Result<Self> {
        let mut m = Self::new(meta.backbone_order, meta.block_dim, meta.class_count, meta.dropout_rate, 0)?;
        m.network.load_named(tensors)?;
        m.trained = meta.trained;
        Ok(m)
    }

    pub fn meta(&self) -> FusionMeta {
        FusionMeta {
            backbone_order: self.backbone_order.clone(),
            block_dim: self.block_dim,
            class_count: self.class_count,
            dropout_rate: self.dropout_rate,
            trained: self.trained,
        }
    }

    /// Mutable access for tests and tools that set parameters directly.
    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.network
    }
}

impl Classifier for FusionModel {
    fn network(&self) -> &Network<f32> {
        &self.network
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn class_count(&self) -> usize {
        self.class_count
    }
}

pub fn train_fusion(
    model: &mut FusionModel,
    features: &Tensor<f32>,
    labels: &[usize],
    schedule: &Schedule,
    seed: u64,
) -> Result<TrainHistory> {
    check_labels(labels, model.class_count)?;
    let history = train_network(&mut model.network, &mut |_| Ok(features.clone()), labels, schedule, seed)?;
    model.trained = true;
    Ok(history)
}
