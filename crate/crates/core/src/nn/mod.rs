//! Minimal neural-network kernel: the fixed layer set used by the trainable
//! heads (dense, batch norm, dropout, softmax cross-entropy), analytic
//! backward passes, Adam, and a binary checkpoint format.

mod adam;
mod batchnorm;
mod checkpoint;
mod dense;
mod dropout;
mod loss;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormParams};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use dense::{dense_backward, dense_forward, Activation, DenseGrads, DenseParams};
pub use dropout::{dropout_backward, dropout_forward};
pub use loss::{cross_entropy, cross_entropy_labels, one_hot, softmax, softmax_ce_grad};
pub use network::{Layer, Network};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}
