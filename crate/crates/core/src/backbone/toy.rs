use rand::Rng as _;

use crate::rng::rng_for;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// 3×3 convolution with weights `[3, 3, c_in, c_out]` and edge-replicating
/// padding, so a constant input yields constant maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub weights: Tensor<f32>,
    pub bias: Tensor<f32>,
    pub stride: usize,
}

impl Conv3x3 {
    pub fn new(weights: Tensor<f32>, bias: Tensor<f32>, stride: usize) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 4 || s[0] != 3 || s[1] != 3 || bias.shape() != [s[3]] || stride == 0 {
            return Err(Error::Dimension(format!(
                "conv weights {:?} / bias {:?} / stride {stride} are inconsistent",
                s,
                bias.shape()
            )));
        }
        Ok(Self { weights, bias, stride })
    }

    /// He-uniform weights and small uniform biases.
    pub fn random(c_in: usize, c_out: usize, stride: usize, seed: u64, layer: u64) -> Self {
        let mut rng = rng_for(seed, &[layer]);
        let limit = (6.0 / (9 * c_in) as f64).sqrt() as f32;
        let w = (0..9 * c_in * c_out).map(|_| rng.random_range(-limit..=limit)).collect();
        let b = (0..c_out).map(|_| rng.random_range(-0.1f32..=0.1)).collect();
        Self {
            weights: Tensor::new(vec![3, 3, c_in, c_out], w).expect("shape matches data"),
            bias: Tensor::new(vec![c_out], b).expect("shape matches data"),
            stride,
        }
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[3]
    }

    /// `x` is `[H, W, C_in]`; output is `[ceil(H/s), ceil(W/s), C_out]`.
    pub fn forward(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.c_in() {
            return Err(Error::Dimension(format!("conv expects [H, W, {}], got {:?}", self.c_in(), s)));
        }
        let (h, w, ci, co) = (s[0], s[1], self.c_in(), self.c_out());
        let (ho, wo) = (h.div_ceil(self.stride), w.div_ceil(self.stride));
        let (xd, wd, bd) = (x.data(), self.weights.data(), self.bias.data());
        let mut out = vec![0.0f32; ho * wo * co];
        for oy in 0..ho {
            for ox in 0..wo {
                let acc = &mut out[(oy * wo + ox) * co..(oy * wo + ox + 1) * co];
                acc.copy_from_slice(bd);
                for ky in 0..3 {
                    let iy = (oy * self.stride + ky).saturating_sub(1).min(h - 1);
                    for kx in 0..3 {
                        let ix = (ox * self.stride + kx).saturating_sub(1).min(w - 1);
                        let xin = &xd[(iy * w + ix) * ci..(iy * w + ix + 1) * ci];
                        let wbase = (ky * 3 + kx) * ci * co;
                        for (c, &v) in xin.iter().enumerate() {
                            let wrow = &wd[wbase + c * co..wbase + (c + 1) * co];
                            for (a, &wv) in acc.iter_mut().zip(wrow) {
                                *a += v * wv;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![ho, wo, co], out)
    }
}

pub fn relu(mut x: Tensor<f32>) -> Tensor<f32> {
    for v in x.data_mut() {
        *v = v.max(0.0);
    }
    x
}

/// Residual branch `F = conv2(relu(conv1(x)))`, both stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualWeights {
    pub conv1: Conv3x3,
    pub conv2: Conv3x3,
}

impl ResidualWeights {
    pub fn branch(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.conv2.forward(&relu(self.conv1.forward(x)?))
    }
}

/// `H(x) = F(x) + x`.
pub fn residual_block(x: &Tensor<f32>, weights: &ResidualWeights) -> Result<Tensor<f32>> {
    let f = weights.branch(x)?;
    if f.shape() != x.shape() {
        return Err(Error::Dimension(format!(
            "residual branch output {:?} does not match input {:?}",
            f.shape(),
            x.shape()
        )));
    }
    let data = f.data().iter().zip(x.data()).map(|(a, b)| a + b).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Per-channel spatial maximum of an `[H, W, C]` map.
pub fn global_max_pool(map: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = map.shape();
    if s.len() != 3 || s[0] == 0 || s[1] == 0 {
        return Err(Error::Dimension(format!("global max pool expects non-empty [H, W, C], got {s:?}")));
    }
    let c = s[2];
    let mut out = vec![f32::NEG_INFINITY; c];
    for px in map.data().chunks_exact(c) {
        for (o, &v) in out.iter_mut().zip(px) {
            *o = o.max(v);
        }
    }
    Tensor::new(vec![c], out)
}

pub const TOY_CHANNELS: [usize; 3] = [8, 16, 32];

/// Three stride-2 conv stages (8/16/32 channels, ReLU), a residual block
/// after the third, and global max pooling to 32 features.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrunk {
    pub stages: Vec<Conv3x3>,
    pub residual: ResidualWeights,
}

impl ToyTrunk {
    pub fn new(seed: u64) -> Self {
        let mut c_in = 3;
        let stages = TOY_CHANNELS
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let conv = Conv3x3::random(c_in, c, 2, seed, i as u64);
                c_in = c;
                conv
            })
            .collect();
        let c = TOY_CHANNELS[2];
        Self {
            stages,
            residual: ResidualWeights {
                conv1: Conv3x3::random(c, c, 1, seed, 3),
                conv2: Conv3x3::random(c, c, 1, seed, 4),
            },
        }
    }

    pub fn output_dim(&self) -> usize {
        self.residual.conv2.c_out()
    }

    /// Feature maps after each stage; the last includes the residual block.
    pub fn stage_maps(&self, x: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
        let mut maps = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        for (i, conv) in self.stages.iter().enumerate() {
            cur = relu(conv.forward(&cur)?);
            if i + 1 == self.stages.len() {
                cur = residual_block(&cur, &self.residual)?;
            }
            maps.push(cur.clone());
        }
        Ok(maps)
    }

    pub fn forward(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let maps = self.stage_maps(x)?;
        global_max_pool(maps.last().expect("trunk has stages"))
    }

    pub fn parameters(&self) -> Vec<&Tensor<f32>> {
        let mut p = Vec::new();
        for conv in self.stages.iter().chain([&self.residual.conv1, &self.residual.conv2]) {
            p.push(&conv.weights);
            p.push(&conv.bias);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_pool_and_sentinels() {
        let px = Tensor::new(vec![1, 1, 3], vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(global_max_pool(&px).unwrap().data(), &[1.0, -2.0, 3.0]);
        let mut m = Tensor::<f32>::zeros(&[4, 5, 2]);
        m.data_mut()[(2 * 5 + 3) * 2] = 9.0;
        m.data_mut()[(0 * 5 + 1) * 2 + 1] = 7.0;
        assert_eq!(global_max_pool(&m).unwrap().data(), &[9.0, 7.0]);
    }

    #[test]
    fn zero_branch_is_exact_identity() {
        let zero = Conv3x3::new(Tensor::zeros(&[3, 3, 4, 4]), Tensor::zeros(&[4]), 1).unwrap();
        let w = ResidualWeights {
            conv1: zero.clone(),
            conv2: zero,
        };
        let x = Tensor::new(vec![3, 2, 4], (0..24).map(|i| i as f32 * 0.37 - 3.0).collect()).unwrap();
        assert_eq!(residual_block(&x, &w).unwrap(), x);
    }

    #[test]
    fn strided_conv_output_shape() {
        let conv = Conv3x3::random(3, 8, 2, 0, 0);
        let y = conv.forward(&Tensor::zeros(&[7, 6, 3])).unwrap();
        assert_eq!(y.shape(), &[4, 3, 8]);
        assert!(conv.forward(&Tensor::zeros(&[7, 6, 2])).is_err());
    }

    #[test]
    fn toy_trunk_shapes() {
        let t = ToyTrunk::new(3);
        let maps = t.stage_maps(&Tensor::zeros(&[64, 64, 3])).unwrap();
        let shapes: Vec<_> = maps.iter().map(|m| m.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![32, 32, 8], vec![16, 16, 16], vec![8, 8, 32]]);
        assert_eq!(t.output_dim(), 32);
        assert_ne!(ToyTrunk::new(3), ToyTrunk::new(4));
    }
}
