use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.ndim() != 2 {
        return Err(Error::dim(format!("softmax expects [batch, K], got {:?}", logits.shape())));
    }
    let k = logits.shape()[1];
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax - onehot) / batch`.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let probs = softmax(logits)?;
    let (batch, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch {
        return Err(Error::dim(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::dim(format!("label {bad} out of range for {k} classes")));
    }

    let ld = logits.data();
    let mut loss = 0.0f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = &ld[r * k..(r + 1) * k];
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        loss += lse - row[label].as_f64();
    }
    loss /= batch as f64;

    let inv = T::from_f64(1.0 / batch as f64);
    let mut grad = probs.into_vec();
    for (r, &label) in labels.iter().enumerate() {
        grad[r * k + label] = grad[r * k + label] - T::one();
    }
    for g in grad.iter_mut() {
        *g = *g * inv;
    }
    Ok((loss, Tensor::from_vec(logits.shape(), grad)?))
}
