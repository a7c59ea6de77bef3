use std::path::Path;

use tract_onnx::prelude::*;

use super::InterchangeManifest;
use crate::tensor::Tensor;
use crate::{Error, Result};

type Plan = std::sync::Arc<TypedRunnableModel>;

/// A frozen ONNX trunk run by tract with a fixed `[1, 3, H, W]` input.
pub struct OnnxTrunk {
    plan: Plan,
    height: usize,
    width: usize,
}

impl std::fmt::Debug for OnnxTrunk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxTrunk").field("height", &self.height).field("width", &self.width).finish()
    }
}

impl OnnxTrunk {
    pub fn load(path: &Path, manifest: &InterchangeManifest) -> Result<Self> {
        let load = |e: TractError| Error::Load(format!("{}: {e:#}", path.display()));
        let (h, w) = (manifest.input_size.0 as usize, manifest.input_size.1 as usize);
        let mut model = tract_onnx::onnx().model_for_path(path).map_err(load)?;
        let input = model
            .input_outlets()
            .map_err(load)?
            .iter()
            .position(|o| model.node(o.node).name == manifest.input_name)
            .ok_or_else(|| Error::Load(format!("{}: no input named {:?}", path.display(), manifest.input_name)))?;
        model.set_input_fact(input, f32::fact([1, 3, h, w]).into()).map_err(load)?;
        model
            .select_outputs_by_name([manifest.output_name.as_str()])
            .map_err(|e| Error::Load(format!("{}: output node {:?}: {e}", path.display(), manifest.output_name)))?;
        let plan = model.into_optimized().map_err(load)?.into_runnable().map_err(load)?;
        Ok(Self { plan, height: h, width: w })
    }

    /// Runs one preprocessed `[H, W, 3]` image; returns the raw output
    /// (`[C, h, w]` map or `[C]` vector) in CHW order with its shape.
    pub fn run(&self, x: &Tensor<f32>) -> Result<(Vec<usize>, Vec<f32>)> {
        if x.shape() != [self.height, self.width, 3] {
            return Err(Error::Inference(format!(
                "trunk expects [{}, {}, 3], got {:?}",
                self.height,
                self.width,
                x.shape()
            )));
        }
        let hw = self.height * self.width;
        let mut chw = vec![0.0f32; 3 * hw];
        for (i, px) in x.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                chw[c * hw + i] = px[c];
            }
        }
        let input = tract_ndarray::Array4::from_shape_vec((1, 3, self.height, self.width), chw)
            .map_err(|e| Error::Inference(e.to_string()))?;
        let out = self
            .plan
            .run(tvec!(input.into_tensor().into()))
            .map_err(|e| Error::Inference(format!("{e:#}")))?;
        let view = out[0].to_plain_array_view::<f32>().map_err(|e| Error::Inference(e.to_string()))?;
        let shape: Vec<usize> = view.shape().iter().copied().skip(1).collect();
        Ok((shape, view.iter().copied().collect()))
    }
}
