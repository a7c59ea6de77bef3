use crate::nn::Mode;
use crate::{Element, Error, Result, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_MOMENTUM: f64 = 0.99;

/// Per-column batch normalization.
///
/// Running statistics follow `running = momentum · running + (1 − momentum) · batch`
/// and use the biased batch variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T: Element = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: f64,
    pub momentum: f64,
}

impl<T: Element> BatchNormParams<T> {
    pub fn new(dim: usize) -> Self {
        Self::with_config(dim, DEFAULT_EPSILON, DEFAULT_MOMENTUM)
            .expect("default batch norm config is valid")
    }

    pub fn with_config(dim: usize, epsilon: f64, momentum: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("batch norm dim must be >= 1".into()));
        }
        if epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "batch norm epsilon must be > 0, got {epsilon}"
            )));
        }
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "batch norm momentum must be in (0, 1), got {momentum}"
            )));
        }
        Ok(Self {
            gamma: Tensor::full(&[dim], T::one()),
            beta: Tensor::zeros(&[dim]),
            running_mean: Tensor::zeros(&[dim]),
            running_var: Tensor::full(&[dim], T::one()),
            epsilon,
            momentum,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

/// Values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Element> {
    mode: Mode,
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
}

pub fn batchnorm_forward<T: Element>(
    x: &Tensor<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    match mode {
        Mode::Infer => batchnorm_infer(x, p),
        Mode::Train => {
            let (rows, cols) = check_cols(x, p)?;
            if rows < 2 {
                return Err(Error::BatchTooSmall(rows));
            }
            let n = T::from_f64(rows as f64);
            let mut mean = vec![T::zero(); cols];
            for i in 0..rows {
                for (m, &v) in mean.iter_mut().zip(x.row(i)) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / n);
            let mut var = vec![T::zero(); cols];
            for i in 0..rows {
                for ((s, &v), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                    let d = v - m;
                    *s = *s + d * d;
                }
            }
            var.iter_mut().for_each(|s| *s = *s / n);

            let mom = T::from_f64(p.momentum);
            let keep = T::one() - mom;
            for (r, &m) in p.running_mean.data_mut().iter_mut().zip(&mean) {
                *r = mom * *r + keep * m;
            }
            for (r, &v) in p.running_var.data_mut().iter_mut().zip(&var) {
                *r = mom * *r + keep * v;
            }
            Ok(normalize(x, p, &mean, &var, Mode::Train))
        }
    }
}

/// Inference-mode forward using the running statistics; never mutates `p`.
pub(crate) fn batchnorm_infer<T: Element>(
    x: &Tensor<T>,
    p: &BatchNormParams<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    check_cols(x, p)?;
    Ok(normalize(
        x,
        p,
        p.running_mean.data(),
        p.running_var.data(),
        Mode::Infer,
    ))
}

fn check_cols<T: Element>(x: &Tensor<T>, p: &BatchNormParams<T>) -> Result<(usize, usize)> {
    let (rows, cols) = x.dims2()?;
    if cols != p.dim() {
        return Err(Error::Dimension(format!(
            "batch norm expects {} columns, got {cols}",
            p.dim()
        )));
    }
    Ok((rows, cols))
}

fn normalize<T: Element>(
    x: &Tensor<T>,
    p: &BatchNormParams<T>,
    mean: &[T],
    var: &[T],
    mode: Mode,
) -> (Tensor<T>, BatchNormCache<T>) {
    let (rows, cols) = (x.shape()[0], x.shape()[1]);
    let eps = T::from_f64(p.epsilon);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let gamma = p.gamma.data();
    let beta = p.beta.data();
    let mut x_hat = Tensor::zeros(&[rows, cols]);
    let mut out = Tensor::zeros(&[rows, cols]);
    for i in 0..rows {
        let xr = x.row(i);
        let hr = x_hat.row_mut(i);
        for j in 0..cols {
            hr[j] = (xr[j] - mean[j]) * inv_std[j];
        }
        let or = out.row_mut(i);
        for j in 0..cols {
            or[j] = gamma[j] * hr[j] + beta[j];
        }
    }
    (out, BatchNormCache { mode, x_hat, inv_std })
}

/// Returns `(d_input, d_gamma, d_beta)`. In train mode the input gradient
/// runs through the batch mean and variance.
pub fn batchnorm_backward<T: Element>(
    p: &BatchNormParams<T>,
    cache: &BatchNormCache<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (rows, cols) = upstream.dims2()?;
    if cache.x_hat.shape() != upstream.shape() {
        return Err(Error::Dimension(format!(
            "upstream {:?} vs cached {:?}",
            upstream.shape(),
            cache.x_hat.shape()
        )));
    }
    let mut d_gamma = vec![T::zero(); cols];
    let mut d_beta = vec![T::zero(); cols];
    for i in 0..rows {
        let g = upstream.row(i);
        let h = cache.x_hat.row(i);
        for j in 0..cols {
            d_gamma[j] = d_gamma[j] + g[j] * h[j];
            d_beta[j] = d_beta[j] + g[j];
        }
    }

    let gamma = p.gamma.data();
    let mut dx = Tensor::zeros(&[rows, cols]);
    match cache.mode {
        Mode::Train => {
            // dx = γ·σ⁻¹/B · (B·dy − Σdy − x̂·Σ(dy·x̂))
            let n = T::from_f64(rows as f64);
            for i in 0..rows {
                let g = upstream.row(i);
                let h = cache.x_hat.row(i);
                let out = dx.row_mut(i);
                for j in 0..cols {
                    out[j] = gamma[j] * cache.inv_std[j] / n
                        * (n * g[j] - d_beta[j] - h[j] * d_gamma[j]);
                }
            }
        }
        Mode::Infer => {
            for i in 0..rows {
                let g = upstream.row(i);
                let out = dx.row_mut(i);
                for j in 0..cols {
                    out[j] = g[j] * gamma[j] * cache.inv_std[j];
                }
            }
        }
    }
    Ok((
        dx,
        Tensor::new(vec![cols], d_gamma)?,
        Tensor::new(vec![cols], d_beta)?,
    ))
}
