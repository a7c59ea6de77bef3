use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::train::{train_network, Schedule, TrainHistory};
use super::{check_labels, Classifier};
use crate::nn::{Activation, BatchNormParams, DenseParams, Layer, Network};
use crate::rng::{derive_seed, Rng};
use crate::{Error, Result, Tensor};

/// Width of the penultimate head layer whose activations become features.
pub const FEATURE_DIM: usize = 1024;

/// Index of the layer after the feature tap: BN, dense+relu.
const FEATURE_LAYERS: usize = 2;

/// Trainable stack on top of one frozen trunk:
/// BN → dense(1024, relu) → dropout → dense(C), softmax applied by callers.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub backbone_id: String,
    pub class_count: usize,
    pub dropout_rate: f64,
    network: Network<f32>,
    trained: bool,
}

/// Everything except tensors, stored next to a head checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMeta {
    pub backbone_id: String,
    pub input_dim: usize,
    pub class_count: usize,
    pub dropout_rate: f64,
    pub trained: bool,
}

impl HeadModel {
    pub fn new(backbone_id: &str, input_dim: usize, class_count: usize, dropout_rate: f64, seed: u64) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 classes, got {class_count}")));
        }
        let mut rng = Rng::seed_from_u64(derive_seed(seed, &[0x4845_4144]));
        let network = Network::new(vec![
            Layer::BatchNorm(BatchNormParams::new(input_dim)),
            Layer::Dense(DenseParams::glorot(input_dim, FEATURE_DIM, Activation::Relu, &mut rng)?),
            Layer::Dropout { rate: dropout_rate },
            Layer::Dense(DenseParams::glorot(FEATURE_DIM, class_count, Activation::None, &mut rng)?),
        ])?;
        Ok(Self {
            backbone_id: backbone_id.to_string(),
            class_count,
            dropout_rate,
            network,
            trained: false,
        })
    }

    pub fn from_parts(meta: HeadMeta, tensors: Vec<(String, Tensor<f32>)>) -> Result<Self> {
        let mut head = Self::new(&meta.backbone_id, meta.input_dim, meta.class_count, meta.dropout_rate, 0)?;
        head.network.load_named(tensors)?;
        head.trained = meta.trained;
        Ok(head)
    }

    pub fn meta(&self) -> HeadMeta {
        HeadMeta {
            backbone_id: self.backbone_id.clone(),
            input_dim: self.input_dim(),
            class_count: self.class_count,
            dropout_rate: self.dropout_rate,
            trained: self.trained,
        }
    }

    /// Post-relu activations of the 1024-wide dense layer, in inference mode.
    pub fn activations(&self, trunk_features: &Tensor<f32>) -> Result<Tensor<f32>> {
        if !self.trained {
            return Err(Error::State(format!(
                "head for {} must be trained before extracting features",
                self.backbone_id
            )));
        }
        self.check_width(trunk_features)?;
        self.network.forward_prefix(trunk_features, FEATURE_LAYERS)
    }
}

impl Classifier for HeadModel {
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

pub fn train_head(
    head: &mut HeadModel,
    features: &Tensor<f32>,
    labels: &[usize],
    schedule: &Schedule,
    seed: u64,
) -> Result<TrainHistory> {
    train_head_with(head, &mut |_| Ok(features.clone()), labels, schedule, seed)
}

/// Like [`train_head`], with inputs produced per epoch by `data`.
pub fn train_head_with(
    head: &mut HeadModel,
    data: &mut dyn FnMut(usize) -> Result<Tensor<f32>>,
    labels: &[usize],
    schedule: &Schedule,
    seed: u64,
) -> Result<TrainHistory> {
    check_labels(labels, head.class_count)?;
    let history = train_network(&mut head.network, data, labels, schedule, seed)?;
    head.trained = true;
    Ok(history)
}
