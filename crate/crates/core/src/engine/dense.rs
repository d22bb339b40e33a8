use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn fc_dims<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    if w.ndim() != 2 {
        return Err(Error::dim(format!("fc weight must be [in, out], got {:?}", w.shape())));
    }
    let (inp, out) = (w.shape()[0], w.shape()[1]);
    if x.ndim() < 2 || x.row_len() != inp {
        return Err(Error::dim(format!("fc input {:?} does not flatten to [batch, {inp}]", x.shape())));
    }
    Ok((x.rows(), inp, out))
}

/// `y = x W + b`.
///
/// Trailing input dimensions are flattened. Every output element is reduced
/// over the input index in ascending order starting from zero, and the bias
/// is added last, so results are reproducible bit for bit.
pub fn fc_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let (batch, inp, out) = fc_dims(x, w)?;
    if let Some(b) = b {
        if b.len() != out {
            return Err(Error::dim(format!("fc bias has {} entries, expected {out}", b.len())));
        }
    }
    let (xd, wd) = (x.data(), w.data());
    let mut y = vec![T::zero(); batch * out];
    for r in 0..batch {
        let yr = &mut y[r * out..(r + 1) * out];
        let xr = &xd[r * inp..(r + 1) * inp];
        for (k, &xv) in xr.iter().enumerate() {
            let wk = &wd[k * out..(k + 1) * out];
            for (acc, &wv) in yr.iter_mut().zip(wk) {
                *acc = *acc + xv * wv;
            }
        }
        if let Some(b) = b {
            for (acc, &bv) in yr.iter_mut().zip(b.data()) {
                *acc = *acc + bv;
            }
        }
    }
    Tensor::from_vec(&[batch, out], y)
}

pub struct FcGrads<T> {
    /// Shaped like the layer input; `None` when not requested.
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fc_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_y: &Tensor<T>,
    need_input_grad: bool,
) -> Result<FcGrads<T>> {
    let (batch, inp, out) = fc_dims(x, w)?;
    if grad_y.shape() != [batch, out] {
        return Err(Error::dim(format!("fc upstream gradient {:?} should be [{batch}, {out}]", grad_y.shape())));
    }
    let (xd, gd) = (x.data(), grad_y.data());

    let mut gw = vec![T::zero(); inp * out];
    for r in 0..batch {
        let gr = &gd[r * out..(r + 1) * out];
        for (k, &xv) in xd[r * inp..(r + 1) * inp].iter().enumerate() {
            let row = &mut gw[k * out..(k + 1) * out];
            for (acc, &g) in row.iter_mut().zip(gr) {
                *acc = *acc + xv * g;
            }
        }
    }

    let mut gb = vec![T::zero(); out];
    for r in 0..batch {
        for (acc, &g) in gb.iter_mut().zip(&gd[r * out..(r + 1) * out]) {
            *acc = *acc + g;
        }
    }

    let input = if need_input_grad {
        // dx = g W^T, computed against the transposed weight for contiguous rows
        let wt = w.transpose2()?;
        let wtd = wt.data();
        let mut gx = vec![T::zero(); batch * inp];
        for r in 0..batch {
            let gxr = &mut gx[r * inp..(r + 1) * inp];
            for (j, &g) in gd[r * out..(r + 1) * out].iter().enumerate() {
                let wj = &wtd[j * inp..(j + 1) * inp];
                for (acc, &wv) in gxr.iter_mut().zip(wj) {
                    *acc = *acc + g * wv;
                }
            }
        }
        Some(Tensor::from_vec(x.shape(), gx)?)
    } else {
        None
    };

    Ok(FcGrads { input, weight: Tensor::from_vec(&[inp, out], gw)?, bias: Tensor::from_vec(&[out], gb)? })
}
