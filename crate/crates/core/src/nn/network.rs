use super::batchnorm::batchnorm_infer;
use super::dense::dense_forward_cached;
use super::{
    batchnorm_backward, batchnorm_forward, dense_backward, dropout_backward, dropout_forward,
    Activation, BatchNormCache, BatchNormParams, DenseParams, Mode,
};
use crate::rng::derive_seed;
use crate::{Element, Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T: Element = f32> {
    Dense(DenseParams<T>),
    BatchNorm(BatchNormParams<T>),
    Dropout { rate: f64 },
}

#[derive(Debug, Clone)]
enum LayerCache<T: Element> {
    Dense { input: Tensor<T>, pre: Tensor<T> },
    BatchNorm(BatchNormCache<T>),
    Dropout(Option<Vec<T>>),
}

/// A fixed sequence of layers producing logits. Softmax and the loss live
/// outside the stack; [`Network::backward`] takes the gradient of the loss
/// with respect to the logits.
#[derive(Debug, Clone)]
pub struct Network<T: Element = f32> {
    layers: Vec<Layer<T>>,
    cache: Option<Vec<LayerCache<T>>>,
}

impl<T: Element> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl<T: Element> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        for l in &layers {
            if let Layer::Dropout { rate } = l {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::InvalidParameter(format!(
                        "dropout rate must be in [0, 1), got {rate}"
                    )));
                }
            }
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.cache = None;
        &mut self.layers
    }

    /// Forward pass that records what [`Network::backward`] needs. In train
    /// mode batch norm uses batch statistics (and updates running ones) and
    /// dropout draws its mask from `seed` mixed with the layer index.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, seed: u64) -> Result<Tensor<T>> {
        self.cache = None;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            h = match layer {
                Layer::Dense(p) => {
                    let (out, pre) = dense_forward_cached(&h, p)?;
                    caches.push(LayerCache::Dense { input: h, pre });
                    out
                }
                Layer::BatchNorm(p) => {
                    let (out, c) = batchnorm_forward(&h, p, mode)?;
                    caches.push(LayerCache::BatchNorm(c));
                    out
                }
                Layer::Dropout { rate } => {
                    let (out, mask) =
                        dropout_forward(&h, *rate, derive_seed(seed, &[i as u64]), mode)?;
                    caches.push(LayerCache::Dropout(mask));
                    out
                }
            };
        }
        self.cache = Some(caches);
        Ok(h)
    }

    /// Inference over the first `n_layers` layers; never touches state.
    pub fn forward_prefix(&self, x: &Tensor<T>, n_layers: usize) -> Result<Tensor<T>> {
        if n_layers > self.layers.len() {
            return Err(Error::InvalidParameter(format!(
                "network has {} layers, asked for {n_layers}",
                self.layers.len()
            )));
        }
        let mut h = x.clone();
        for layer in &self.layers[..n_layers] {
            h = match layer {
                Layer::Dense(p) => dense_forward_cached(&h, p)?.0,
                Layer::BatchNorm(p) => batchnorm_infer(&h, p)?.0,
                Layer::Dropout { .. } => h,
            };
        }
        Ok(h)
    }

    /// Inference-mode logits.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_prefix(x, self.layers.len())
    }

    /// Gradients of every trainable tensor, in [`Network::params`] order,
    /// given the gradient with respect to the logits of the last forward pass.
    pub fn backward(&self, d_out: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.backward_with_input(d_out).map(|(g, _)| g)
    }

    /// Like [`Network::backward`], also returning the gradient with respect
    /// to the network input.
    pub fn backward_with_input(&self, d_out: &Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        let caches = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let mut grads_rev: Vec<Tensor<T>> = Vec::new();
        let mut g = d_out.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            g = match (layer, cache) {
                (Layer::Dense(p), LayerCache::Dense { input, pre }) => {
                    let dg = dense_backward(p, input, pre, &g)?;
                    grads_rev.push(dg.bias);
                    grads_rev.push(dg.weights);
                    dg.input
                }
                (Layer::BatchNorm(p), LayerCache::BatchNorm(c)) => {
                    let (dx, d_gamma, d_beta) = batchnorm_backward(p, c, &g)?;
                    grads_rev.push(d_beta);
                    grads_rev.push(d_gamma);
                    dx
                }
                (Layer::Dropout { .. }, LayerCache::Dropout(mask)) => {
                    dropout_backward(&g, mask.as_deref())?
                }
                _ => return Err(Error::State("layer cache out of sync".into())),
            };
        }
        grads_rev.reverse();
        Ok((grads_rev, g))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Dense(p) => out.extend([&p.weights, &p.bias]),
                Layer::BatchNorm(p) => out.extend([&p.gamma, &p.beta]),
                Layer::Dropout { .. } => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense(p) => out.extend([&mut p.weights, &mut p.bias]),
                Layer::BatchNorm(p) => out.extend([&mut p.gamma, &mut p.beta]),
                Layer::Dropout { .. } => {}
            }
        }
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|p| p.shape().to_vec()).collect()
    }

    /// Signs of every ReLU pre-activation seen in the last forward pass.
    pub fn relu_pattern(&self) -> Option<Vec<bool>> {
        let caches = self.cache.as_ref()?;
        let mut out = Vec::new();
        for (layer, cache) in self.layers.iter().zip(caches) {
            if let (Layer::Dense(p), LayerCache::Dense { pre, .. }) = (layer, cache) {
                if p.activation == Activation::Relu {
                    out.extend(pre.data().iter().map(|&v| v > T::zero()));
                }
            }
        }
        Some(out)
    }

    /// All persistent tensors (trainable and running statistics) keyed by
    /// `layers.<index>.<field>`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Dense(p) => {
                    out.push((format!("layers.{i}.weights"), &p.weights));
                    out.push((format!("layers.{i}.bias"), &p.bias));
                }
                Layer::BatchNorm(p) => {
                    out.push((format!("layers.{i}.gamma"), &p.gamma));
                    out.push((format!("layers.{i}.beta"), &p.beta));
                    out.push((format!("layers.{i}.running_mean"), &p.running_mean));
                    out.push((format!("layers.{i}.running_var"), &p.running_var));
                }
                Layer::Dropout { .. } => {}
            }
        }
        out
    }

    /// Overwrites tensors from `(name, tensor)` pairs produced by
    /// [`Network::named_tensors`]. Every named slot must be present with a
    /// matching shape.
    pub fn load_named(&mut self, tensors: Vec<(String, Tensor<T>)>) -> Result<()> {
        let mut map: std::collections::HashMap<String, Tensor<T>> = tensors.into_iter().collect();
        self.cache = None;
        for (i, l) in self.layers.iter_mut().enumerate() {
            let slots: Vec<(&str, &mut Tensor<T>)> = match l {
                Layer::Dense(p) => vec![("weights", &mut p.weights), ("bias", &mut p.bias)],
                Layer::BatchNorm(p) => vec![
                    ("gamma", &mut p.gamma),
                    ("beta", &mut p.beta),
                    ("running_mean", &mut p.running_mean),
                    ("running_var", &mut p.running_var),
                ],
                Layer::Dropout { .. } => vec![],
            };
            for (field, slot) in slots {
                let name = format!("layers.{i}.{field}");
                let t = map
                    .remove(&name)
                    .ok_or_else(|| Error::Load(format!("checkpoint lacks tensor {name}")))?;
                if t.shape() != slot.shape() {
                    return Err(Error::Load(format!(
                        "tensor {name} has shape {:?}, expected {:?}",
                        t.shape(),
                        slot.shape()
                    )));
                }
                *slot = t;
            }
        }
        if let Some(extra) = map.keys().next() {
            return Err(Error::Load(format!("unexpected tensor {extra} in checkpoint")));
        }
        Ok(())
    }
}
