use rand::Rng;

use crate::nn::Mode;
use crate::rng::rng_for;
use crate::{Element, Error, Result, Tensor};

/// Inverted dropout. Returns the output and, in train mode, the per-element
/// multiplier mask (`0` or `1 / (1 − rate)`) needed by the backward pass.
pub fn dropout_forward<T: Element>(
    x: &Tensor<T>,
    rate: f64,
    seed: u64,
    mode: Mode,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let mut rng = rng_for(seed, &[]);
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Element>(upstream: &Tensor<T>, mask: Option<&[T]>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(upstream.clone()),
        Some(m) => {
            if m.len() != upstream.len() {
                return Err(Error::Dimension("dropout mask size mismatch".into()));
            }
            let data = upstream.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::new(upstream.shape().to_vec(), data)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_exact_identity() {
        let x = Tensor::<f32>::from_f64_slice(&[2, 2], &[1.0, -2.0, 3.5, 0.1]).unwrap();
        let (y, mask) = dropout_forward(&x, 0.0, 9, Mode::Train).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
    }

    #[test]
    fn infer_mode_is_bit_identical() {
        let x = Tensor::<f32>::from_f64_slice(&[1, 3], &[0.3, 1e-8, -7.0]).unwrap();
        let (y, _) = dropout_forward(&x, 0.9, 1, Mode::Infer).unwrap();
        assert!(y
            .data()
            .iter()
            .zip(x.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn inverted_scaling_preserves_mean() {
        let x = Tensor::<f64>::full(&[100_000], 1.0);
        let (y, _) = dropout_forward(&x, 0.5, 42, Mode::Train).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn rate_one_is_rejected() {
        let x = Tensor::<f32>::zeros(&[3]);
        assert!(dropout_forward(&x, 1.0, 0, Mode::Train).is_err());
    }
}
