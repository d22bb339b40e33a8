//! Batch normalization over the feature axis.
//!
//! For `[batch, features]` inputs each column is a feature. For
//! `[batch, channels, H, W]` inputs each channel is a feature and the
//! statistics are taken over batch and spatial positions.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    /// Weight of the current batch in the running statistics.
    pub momentum: f64,
}

/// Values kept from a training-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
}

#[derive(Clone, Copy)]
struct Layout {
    batch: usize,
    features: usize,
    spatial: usize,
}

impl Layout {
    fn of(shape: &[usize]) -> Result<Self> {
        match shape.len() {
            2 => Ok(Layout { batch: shape[0], features: shape[1], spatial: 1 }),
            4 => Ok(Layout { batch: shape[0], features: shape[1], spatial: shape[2] * shape[3] }),
            _ => Err(Error::dim(format!("batch norm expects 2-D or 4-D input, got {shape:?}"))),
        }
    }

    #[inline]
    fn index(&self, b: usize, f: usize, s: usize) -> usize {
        (b * self.features + f) * self.spatial + s
    }
}

pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: Tensor::filled(&[features], T::one())?,
            beta: Tensor::zeros(&[features])?,
            running_mean: Tensor::zeros(&[features])?,
            running_var: Tensor::filled(&[features], T::one())?,
            momentum: 0.1,
        })
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn layout(&self, x: &Tensor<T>) -> Result<Layout> {
        let l = Layout::of(x.shape())?;
        if l.features != self.features() {
            return Err(Error::dim(format!(
                "batch norm configured for {} features, input has {}",
                self.features(),
                l.features
            )));
        }
        Ok(l)
    }

    /// Normalizes with batch statistics and updates the running statistics.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let l = self.layout(x)?;
        if l.batch < 2 {
            return Err(Error::dim("batch norm in training mode needs a batch of at least 2"));
        }
        let count = (l.batch * l.spatial) as f64;
        let xd = x.data();
        let mut normalized = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        let mut inv_std = Vec::with_capacity(l.features);
        let momentum = T::from_f64(self.momentum);

        for f in 0..l.features {
            let mut sum = 0.0f64;
            for b in 0..l.batch {
                for s in 0..l.spatial {
                    sum += xd[l.index(b, f, s)].as_f64();
                }
            }
            let mean = sum / count;
            let mut sq = 0.0f64;
            for b in 0..l.batch {
                for s in 0..l.spatial {
                    let d = xd[l.index(b, f, s)].as_f64() - mean;
                    sq += d * d;
                }
            }
            let var = sq / count;
            let istd = T::from_f64(1.0 / (var + BN_EPSILON).sqrt());
            let (gamma, beta) = (self.gamma.data()[f], self.beta.data()[f]);
            let mean_t = T::from_f64(mean);
            for b in 0..l.batch {
                for s in 0..l.spatial {
                    let i = l.index(b, f, s);
                    let xh = (xd[i] - mean_t) * istd;
                    normalized[i] = xh;
                    y[i] = gamma * xh + beta;
                }
            }
            inv_std.push(istd);

            let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
            let rm = &mut self.running_mean.data_mut()[f];
            *rm = (T::one() - momentum) * *rm + momentum * mean_t;
            let rv = &mut self.running_var.data_mut()[f];
            *rv = (T::one() - momentum) * *rv + momentum * T::from_f64(unbiased);
        }

        Ok((
            Tensor::from_vec(x.shape(), y)?,
            BatchNormCache { normalized: Tensor::from_vec(x.shape(), normalized)?, inv_std },
        ))
    }

    /// Normalizes with the frozen running statistics.
    pub fn forward_infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let l = self.layout(x)?;
        let xd = x.data();
        let mut y = vec![T::zero(); x.len()];
        for f in 0..l.features {
            let scale = self.gamma.data()[f] / (self.running_var.data()[f] + T::from_f64(BN_EPSILON)).sqrt();
            let shift = self.beta.data()[f] - self.running_mean.data()[f] * scale;
            for b in 0..l.batch {
                for s in 0..l.spatial {
                    let i = l.index(b, f, s);
                    y[i] = xd[i] * scale + shift;
                }
            }
        }
        Tensor::from_vec(x.shape(), y)
    }

    pub fn backward(&self, cache: &BatchNormCache<T>, grad_y: &Tensor<T>) -> Result<BatchNormGrads<T>> {
        let l = self.layout(grad_y)?;
        cache.normalized.ensure_same_shape(grad_y, "batch norm backward")?;
        let (xh, gd) = (cache.normalized.data(), grad_y.data());
        let count = T::from_f64((l.batch * l.spatial) as f64);
        let mut gx = vec![T::zero(); grad_y.len()];
        let mut ggamma = vec![T::zero(); l.features];
        let mut gbeta = vec![T::zero(); l.features];

        for f in 0..l.features {
            let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
            for b in 0..l.batch {
                for s in 0..l.spatial {
                    let i = l.index(b, f, s);
                    sum_g = sum_g + gd[i];
                    sum_gx = sum_gx + gd[i] * xh[i];
                }
            }
            ggamma[f] = sum_gx;
            gbeta[f] = sum_g;
            let k = self.gamma.data()[f] * cache.inv_std[f] / count;
            for b in 0..l.batch {
                for s in 0..l.spatial {
                    let i = l.index(b, f, s);
                    gx[i] = k * (count * gd[i] - sum_g - xh[i] * sum_gx);
                }
            }
        }

        Ok(BatchNormGrads {
            input: Tensor::from_vec(grad_y.shape(), gx)?,
            gamma: Tensor::from_vec(&[l.features], ggamma)?,
            beta: Tensor::from_vec(&[l.features], gbeta)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_column_normalizes_to_zero() {
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        let x = Tensor::from_vec(&[3, 2], vec![4.0, 1.0, 4.0, 2.0, 4.0, 3.0]).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        for b in 0..3 {
            assert_eq!(y.data()[b * 2], 0.0);
        }
    }

    #[test]
    fn training_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (batch, feats) = (64, 5);
        let data = (0..batch * feats).map(|_| rng.gen_range(-3.0..7.0)).collect();
        let x = Tensor::from_vec(&[batch, feats], data).unwrap();
        let mut bn = BatchNorm::<f64>::new(feats).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        for f in 0..feats {
            let col: Vec<f64> = (0..batch).map(|b| y.data()[b * feats + f]).collect();
            let mean = col.iter().sum::<f64>() / batch as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / batch as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn inference_matches_hand_affine() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        bn.gamma = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        bn.beta = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        bn.running_mean = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        bn.running_var = Tensor::from_vec(&[1], vec![4.0]).unwrap();
        let x = Tensor::from_vec(&[2, 1], vec![3.0, -1.0]).unwrap();
        let y = bn.forward_infer(&x).unwrap();
        let sd = (4.0f64 + 1e-5).sqrt();
        let expect = [2.0 * (3.0 - 1.0) / sd + 0.5, 2.0 * (-1.0 - 1.0) / sd + 0.5];
        for (a, e) in y.data().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_of_one_is_rejected_in_training() {
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert!(bn.forward_train(&x).is_err());
        assert!(bn.forward_infer(&x).is_ok());
    }

    #[test]
    fn spatial_layout_uses_channel_statistics() {
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        let data: Vec<f64> = (0..2 * 2 * 4).map(|v| v as f64).collect();
        let x = Tensor::from_vec(&[2, 2, 2, 2], data).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        for c in 0..2 {
            let mut sum = 0.0;
            for b in 0..2 {
                for s in 0..4 {
                    sum += y.data()[(b * 2 + c) * 4 + s];
                }
            }
            assert!(sum.abs() < 1e-9);
        }
    }
}
