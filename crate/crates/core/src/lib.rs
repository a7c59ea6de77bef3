//! Frozen-trunk transfer learning with hybrid deep feature fusion (HDFF)
//! and late fusion (LF) for cell image classification.
//!
//! The pipeline runs in stages: a labeled [`dataset::Manifest`] is split
//! per class, the training split is expanded offline by [`augment`],
//! frozen [`backbone`] trunks turn images into pooled features, per-trunk
//! heads and the fusion classifier in [`fusion`] are trained with the
//! small numerical kernel in [`nn`], and [`eval`] turns predictions into
//! confusion matrices and metric reports.

pub mod augment;
pub mod backbone;
pub mod dataset;
mod error;
pub mod eval;
pub mod fusion;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DType, Element, Tensor};
