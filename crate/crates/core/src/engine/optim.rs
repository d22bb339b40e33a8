use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// SGD with momentum: `v <- momentum * v + g`, `w <- w - lr * v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for Sgd {
    fn default() -> Self {
        Sgd { learning_rate: 0.01, momentum: 0.9 }
    }
}

impl Sgd {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// Whether the updated parameter is a shadow weight confined to `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clip {
    None,
    UnitInterval,
}

/// One in-place update. `velocity` must match the parameter's shape.
pub fn sgd_step<T: Scalar>(
    w: &mut Tensor<T>,
    grad: &Tensor<T>,
    velocity: &mut Tensor<T>,
    opt: &Sgd,
    clip: Clip,
) -> Result<()> {
    w.ensure_same_shape(grad, "sgd gradient")?;
    w.ensure_same_shape(velocity, "sgd velocity")?;
    grad.check_finite("sgd gradient")?;
    let lr = T::from_f64(opt.learning_rate);
    let mu = T::from_f64(opt.momentum);
    for ((wv, &g), v) in w.data_mut().iter_mut().zip(grad.data()).zip(velocity.data_mut()) {
        *v = mu * *v + g;
        let mut next = *wv - lr * *v;
        if clip == Clip::UnitInterval {
            next = next.max(-T::one()).min(T::one());
        }
        *wv = next;
    }
    Ok(())
}
