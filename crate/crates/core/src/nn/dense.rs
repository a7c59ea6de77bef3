use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Element, Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    None,
}

/// Fully connected layer `act(x·W + b)` with `W` stored as `[in_dim × out_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T: Element = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T: Element> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> DenseParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self> {
        let (in_dim, out_dim) = weights.dims2()?;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Dimension("dense dims must be >= 1".into()));
        }
        if bias.shape() != [out_dim] {
            return Err(Error::Dimension(format!(
                "bias shape {:?} does not match out_dim {out_dim}",
                bias.shape()
            )));
        }
        weights.check_finite("dense weights")?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Dimension("dense dims must be >= 1".into()));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new(-limit, limit).expect("finite non-empty range");
        let data = (0..in_dim * out_dim)
            .map(|_| T::from_f64(dist.sample(rng)))
            .collect();
        Self::new(
            Tensor::new(vec![in_dim, out_dim], data)?,
            Tensor::zeros(&[out_dim]),
            activation,
        )
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// Returns `(output, pre_activation)`.
pub(crate) fn dense_forward_cached<T: Element>(
    x: &Tensor<T>,
    p: &DenseParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (_, in_dim) = x.dims2()?;
    if in_dim != p.in_dim() {
        return Err(Error::Dimension(format!(
            "dense layer expects {} inputs, got {in_dim}",
            p.in_dim()
        )));
    }
    let mut pre = x.matmul(&p.weights)?;
    let (rows, _) = pre.dims2()?;
    for i in 0..rows {
        for (v, &b) in pre.row_mut(i).iter_mut().zip(p.bias.data()) {
            *v = *v + b;
        }
    }
    let out = match p.activation {
        Activation::Relu => pre.map(|v| v.max(T::zero())),
        Activation::None => pre.clone(),
    };
    Ok((out, pre))
}

pub fn dense_forward<T: Element>(x: &Tensor<T>, p: &DenseParams<T>) -> Result<Tensor<T>> {
    dense_forward_cached(x, p).map(|(out, _)| out)
}

/// Backward pass given the layer input, its pre-activation, and the gradient
/// with respect to the layer output.
pub fn dense_backward<T: Element>(
    p: &DenseParams<T>,
    input: &Tensor<T>,
    pre: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    if upstream.shape() != pre.shape() {
        return Err(Error::Dimension(format!(
            "upstream {:?} vs output {:?}",
            upstream.shape(),
            pre.shape()
        )));
    }
    let dpre = match p.activation {
        Activation::Relu => {
            let data = upstream
                .data()
                .iter()
                .zip(pre.data())
                .map(|(&g, &z)| if z > T::zero() { g } else { T::zero() })
                .collect();
            Tensor::new(upstream.shape().to_vec(), data)?
        }
        Activation::None => upstream.clone(),
    };
    Ok(DenseGrads {
        weights: input.t_matmul(&dpre)?,
        bias: dpre.sum_rows()?,
        input: dpre.matmul_t(&p.weights)?,
    })
}
