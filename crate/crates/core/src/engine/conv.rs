use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub stride: usize,
    pub pad: usize,
}

impl Default for ConvParams {
    fn default() -> Self {
        ConvParams { stride: 1, pad: 0 }
    }
}

/// Resolved geometry of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kh: usize,
    pub kw: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    /// Output pixels per image, the `P` of the reuse model.
    pub fn output_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Range of output columns whose input column `ow*stride + j - pad` is in bounds.
    #[inline]
    pub(crate) fn valid_out_range(&self, tap: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad > tap { (self.pad - tap).div_ceil(s) } else { 0 };
        // ow*s + tap - pad < extent  <=>  ow*s < extent + pad - tap
        let limit = extent + self.pad;
        let hi = if limit > tap { (limit - tap).div_ceil(s).min(out_extent) } else { 0 };
        (lo, hi.max(lo))
    }
}

pub fn output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::dim("conv stride and kernel must be positive"));
    }
    if pad >= kernel {
        return Err(Error::dim(format!("conv padding {pad} must be smaller than kernel {kernel}")));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::dim(format!("kernel {kernel} larger than padded input {padded}")));
    }
    if !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::dim(format!("non-integral conv output: ({input} + 2*{pad} - {kernel}) / {stride}")));
    }
    Ok((padded - kernel) / stride + 1)
}

pub fn conv_geometry(x_shape: &[usize], k_shape: &[usize], params: ConvParams) -> Result<ConvGeometry> {
    if x_shape.len() != 4 || k_shape.len() != 4 {
        return Err(Error::dim(format!("conv expects x [B,C,H,W] and K [F,C,kh,kw], got {x_shape:?} and {k_shape:?}")));
    }
    if x_shape[1] != k_shape[1] {
        return Err(Error::dim(format!("conv input has {} channels, kernel expects {}", x_shape[1], k_shape[1])));
    }
    let out_h = output_extent(x_shape[2], k_shape[2], params.stride, params.pad)?;
    let out_w = output_extent(x_shape[3], k_shape[3], params.stride, params.pad)?;
    Ok(ConvGeometry {
        batch: x_shape[0],
        channels: x_shape[1],
        height: x_shape[2],
        width: x_shape[3],
        filters: k_shape[0],
        kh: k_shape[2],
        kw: k_shape[3],
        out_h,
        out_w,
        stride: params.stride,
        pad: params.pad,
    })
}

/// Direct cross-correlation.
///
/// Each output element accumulates over (channel, row tap, column tap) in
/// ascending order, skipping taps that fall in the zero padding; the bias is
/// added last.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    params: ConvParams,
) -> Result<Tensor<T>> {
    let g = conv_geometry(x.shape(), k.shape(), params)?;
    if let Some(b) = bias {
        if b.len() != g.filters {
            return Err(Error::dim(format!("conv bias has {} entries, expected {}", b.len(), g.filters)));
        }
    }
    let (xd, kd) = (x.data(), k.data());
    let plane = g.out_h * g.out_w;
    let in_plane = g.height * g.width;
    let mut y = vec![T::zero(); g.batch * g.filters * plane];

    for b in 0..g.batch {
        for f in 0..g.filters {
            let yp = &mut y[(b * g.filters + f) * plane..(b * g.filters + f + 1) * plane];
            for c in 0..g.channels {
                let xp = &xd[(b * g.channels + c) * in_plane..(b * g.channels + c + 1) * in_plane];
                for i in 0..g.kh {
                    let (oh_lo, oh_hi) = g.valid_out_range(i, g.height, g.out_h);
                    for j in 0..g.kw {
                        let kv = kd[((f * g.channels + c) * g.kh + i) * g.kw + j];
                        let (ow_lo, ow_hi) = g.valid_out_range(j, g.width, g.out_w);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + i - g.pad;
                            let xrow = &xp[ih * g.width..(ih + 1) * g.width];
                            let yrow = &mut yp[oh * g.out_w..(oh + 1) * g.out_w];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * g.stride + j - g.pad;
                                yrow[ow] = yrow[ow] + xrow[iw] * kv;
                            }
                        }
                    }
                }
            }
            if let Some(bias) = bias {
                let bv = bias.data()[f];
                for v in yp.iter_mut() {
                    *v = *v + bv;
                }
            }
        }
    }
    Tensor::from_vec(&[g.batch, g.filters, g.out_h, g.out_w], y)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    grad_y: &Tensor<T>,
    params: ConvParams,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let g = conv_geometry(x.shape(), k.shape(), params)?;
    if grad_y.shape() != [g.batch, g.filters, g.out_h, g.out_w] {
        return Err(Error::dim(format!("conv upstream gradient has shape {:?}", grad_y.shape())));
    }
    let (xd, kd, gd) = (x.data(), k.data(), grad_y.data());
    let plane = g.out_h * g.out_w;
    let in_plane = g.height * g.width;
    let mut gk = vec![T::zero(); k.len()];
    let mut gx = if need_input_grad { vec![T::zero(); x.len()] } else { Vec::new() };
    let mut gb = vec![T::zero(); g.filters];

    for b in 0..g.batch {
        for f in 0..g.filters {
            let gp = &gd[(b * g.filters + f) * plane..(b * g.filters + f + 1) * plane];
            gb[f] = gb[f] + gp.iter().copied().sum::<T>();
            for c in 0..g.channels {
                let base = (b * g.channels + c) * in_plane;
                for i in 0..g.kh {
                    let (oh_lo, oh_hi) = g.valid_out_range(i, g.height, g.out_h);
                    for j in 0..g.kw {
                        let kidx = ((f * g.channels + c) * g.kh + i) * g.kw + j;
                        let kv = kd[kidx];
                        let (ow_lo, ow_hi) = g.valid_out_range(j, g.width, g.out_w);
                        let mut acc = T::zero();
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + i - g.pad;
                            let grow = &gp[oh * g.out_w..(oh + 1) * g.out_w];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * g.stride + j - g.pad;
                                let gv = grow[ow];
                                acc = acc + gv * xd[base + ih * g.width + iw];
                                if need_input_grad {
                                    let xi = base + ih * g.width + iw;
                                    gx[xi] = gx[xi] + gv * kv;
                                }
                            }
                        }
                        gk[kidx] = gk[kidx] + acc;
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: if need_input_grad { Some(Tensor::from_vec(x.shape(), gx)?) } else { None },
        kernel: Tensor::from_vec(k.shape(), gk)?,
        bias: Tensor::from_vec(&[g.filters], gb)?,
    })
}
