use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Elementwise sign with `sign(0) = +1`.
pub fn binary_activation<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { T::one() } else { -T::one() })
}

/// Straight-through hard-tanh: the upstream gradient passes where `|x| <= 1`.
pub fn binary_activation_backward<T: Scalar>(x: &Tensor<T>, grad_y: &Tensor<T>) -> Result<Tensor<T>> {
    x.ensure_same_shape(grad_y, "binary activation backward")?;
    let data =
        x.data().iter().zip(grad_y.data()).map(|(&v, &g)| if v.abs() <= T::one() { g } else { T::zero() }).collect();
    Tensor::from_vec(x.shape(), data)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_y: &Tensor<T>) -> Result<Tensor<T>> {
    x.ensure_same_shape(grad_y, "relu backward")?;
    let data = x.data().iter().zip(grad_y.data()).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect();
    Tensor::from_vec(x.shape(), data)
}
