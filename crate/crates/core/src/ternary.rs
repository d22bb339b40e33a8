//! Threshold quantization and the quantized-weight L2 regularizer.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn check_threshold(eta: f64) -> Result<()> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("quantization threshold must lie in (0, 1), got {eta}")))
    }
}

/// Ternary quantization: `+1` above `eta`, `-1` below `-eta`, `0` on the
/// closed band `[-eta, eta]`.
pub fn quantize<T: Scalar>(w_r: &Tensor<T>, eta: f64) -> Result<Tensor<T>> {
    check_threshold(eta)?;
    let mut out = w_r.clone();
    quantize_into(w_r, eta, &mut out)?;
    Ok(out)
}

/// Quantizes into an existing tensor of the same shape.
pub fn quantize_into<T: Scalar>(w_r: &Tensor<T>, eta: f64, out: &mut Tensor<T>) -> Result<()> {
    w_r.ensure_same_shape(out, "quantize output")?;
    let eta = T::from_f64(eta);
    for (q, &w) in out.data_mut().iter_mut().zip(w_r.data()) {
        *q = if w > eta {
            T::one()
        } else if w < -eta {
            -T::one()
        } else {
            T::zero()
        };
    }
    Ok(())
}

/// `data_loss + lambda * sum(w_q^2) / 2` over all ternary layers.
///
/// With ternary weights the penalty is `lambda / 2` times the nonzero count;
/// the count is accumulated as an integer.
pub fn regularized_cost<'a, T: Scalar>(
    data_loss: f64,
    layers: impl IntoIterator<Item = &'a TernaryLayerState<T>>,
) -> f64 {
    let mut penalty = 0.0;
    for layer in layers {
        penalty += layer.lambda * layer.quantized.count_nonzero() as f64 / 2.0;
    }
    data_loss + penalty
}

/// `lambda * w_q`: nonzero only where `w_q` is.
pub fn reg_gradient<T: Scalar>(w_q: &Tensor<T>, lambda: f64) -> Tensor<T> {
    let lambda = T::from_f64(lambda);
    w_q.map(|q| if q.is_zero() { T::zero() } else { lambda * q })
}

/// Identity straight-through estimator for the weight quantizer, with
/// pruned positions zeroed.
pub fn ste_backward<T: Scalar>(grad_wq: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    grad_wq.ensure_same_shape(mask, "ste mask")?;
    let data = grad_wq.data().iter().zip(mask.data()).map(|(&g, &m)| if m.is_zero() { T::zero() } else { g }).collect();
    Tensor::from_vec(grad_wq.shape(), data)
}

/// Shadow weights, their ternary image, the prune mask, and the layer's
/// threshold and regularization strength.
#[derive(Clone, Debug, PartialEq)]
pub struct TernaryLayerState<T = f32> {
    pub shadow: Tensor<T>,
    pub quantized: Tensor<T>,
    pub mask: Tensor<T>,
    pub eta: f64,
    pub lambda: f64,
}

impl<T: Scalar> TernaryLayerState<T> {
    pub fn new(shadow: Tensor<T>, eta: f64, lambda: f64) -> Result<Self> {
        check_threshold(eta)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be nonnegative, got {lambda}")));
        }
        let quantized = quantize(&shadow, eta)?;
        let mask = Tensor::filled(shadow.shape(), T::one())?;
        Ok(TernaryLayerState { shadow, quantized, mask, eta, lambda })
    }

    /// Recomputes `w_q` from the current shadow weights.
    pub fn requantize(&mut self) -> Result<()> {
        quantize_into(&self.shadow, self.eta, &mut self.quantized)
    }

    pub fn zero_fraction(&self) -> f64 {
        1.0 - self.quantized.count_nonzero() as f64 / self.quantized.len() as f64
    }

    pub fn pruned_fraction(&self) -> f64 {
        1.0 - self.mask.count_nonzero() as f64 / self.mask.len() as f64
    }

    /// Checks the state invariants: shadow weights in `[-1, 1]`, `w_q`
    /// consistent with the shadow weights, binary mask, and zero shadow
    /// weights under the mask.
    pub fn check_invariants(&self) -> Result<()> {
        let expected = quantize(&self.shadow, self.eta)?;
        if expected != self.quantized {
            return Err(Error::config("w_q is stale with respect to w_r"));
        }
        for (i, (&w, &m)) in self.shadow.data().iter().zip(self.mask.data()).enumerate() {
            if w.abs() > T::one() {
                return Err(Error::config(format!("shadow weight {i} = {w:?} outside [-1, 1]")));
            }
            if !(m.is_zero() || m == T::one()) {
                return Err(Error::config(format!("mask entry {i} = {m:?} is not binary")));
            }
            if m.is_zero() && !w.is_zero() {
                return Err(Error::config(format!("pruned shadow weight {i} is nonzero")));
            }
        }
        Ok(())
    }
}
