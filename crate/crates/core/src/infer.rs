//! Inference straight from encoded weights.
//!
//! A [`Decoder`] emits one `(address, ±1)` record per step, the way a
//! hardware decompressor produces an address and a weight each cycle. The
//! sparse kernels are weight-stationary: every decoded weight is applied to
//! all batch rows (FC) or all batch rows and output pixels (conv) before
//! the next step, so only nonzero weights cost multiply-accumulates.
//!
//! Per output element the kernels accumulate in the same order as the dense
//! kernels, which makes float results match the dense oracle.

use crate::codec::bits::BitReader;
use crate::codec::huffman::Codebook;
use crate::codec::{advance, CodecHeader, EncodedLayerBlob};
use crate::engine::conv::conv_geometry;
use crate::engine::{binary_activation, fc_forward, relu, ConvParams};
use crate::error::{Error, Result};
use crate::network::{Layer, Network, WeightKind};
use crate::tensor::{Scalar, Tensor};

/// Address counter, payload cursor, and records still to emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderState {
    /// Last emitted address; `None` before the first record.
    pub address: Option<u64>,
    pub cursor: u64,
    pub remaining: u64,
}

enum Symbols {
    Fixed(u8),
    Huffman(Codebook),
}

pub struct Decoder<'a> {
    blob: &'a EncodedLayerBlob,
    symbols: Symbols,
    reader: BitReader<'a>,
    state: DecoderState,
}

impl<'a> Decoder<'a> {
    pub fn new(blob: &'a EncodedLayerBlob) -> Result<Self> {
        blob.check_frame()?;
        let symbols = match &blob.header {
            CodecHeader::Rle { width } => {
                crate::codec::rle::check_rle_frame(blob, *width)?;
                Symbols::Fixed(*width)
            }
            CodecHeader::Hc { codebook } => Symbols::Huffman(Codebook::from_lengths(codebook.clone())?),
        };
        Ok(Decoder {
            blob,
            symbols,
            reader: blob.reader(),
            state: DecoderState { address: None, cursor: 0, remaining: blob.k },
        })
    }

    pub fn state(&self) -> DecoderState {
        self.state
    }

    /// Next `(address, value)`, or `None` once all `k` records are out.
    pub fn step(&mut self) -> Result<Option<(u64, i8)>> {
        if self.state.remaining == 0 {
            if self.reader.remaining() != 0 {
                return Err(Error::CorruptStream(format!("{} trailing payload bits", self.reader.remaining())));
            }
            return Ok(None);
        }
        let delta = match &self.symbols {
            Symbols::Fixed(w) => self.reader.read(*w),
            Symbols::Huffman(book) => book.read(&mut self.reader)?.map(u64::from),
        }
        .ok_or_else(|| Error::CorruptStream("payload truncated".into()))?;
        let sign = self.reader.read_bit().ok_or_else(|| Error::CorruptStream("payload truncated".into()))?;
        let addr = advance(self.state.address, delta, self.blob.n)?;
        self.state =
            DecoderState { address: Some(addr), cursor: self.reader.position(), remaining: self.state.remaining - 1 };
        Ok(Some((addr, if sign { -1 } else { 1 })))
    }

    /// Runs the decoder to exhaustion.
    pub fn collect_all(mut self) -> Result<Vec<(u64, i8)>> {
        let mut out = Vec::with_capacity(self.blob.k as usize);
        while let Some(r) = self.step()? {
            out.push(r);
        }
        Ok(out)
    }
}

/// Multiply-accumulates performed by a kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacCount(pub u64);

impl std::ops::AddAssign for MacCount {
    fn add_assign(&mut self, o: MacCount) {
        self.0 += o.0;
    }
}

fn fc_shape(blob: &EncodedLayerBlob, x_shape: &[usize]) -> Result<(usize, usize, usize)> {
    if blob.shape.len() != 2 {
        return Err(Error::dim(format!("FC blob must be [out, in], got {:?}", blob.shape)));
    }
    let (out, inp) = (blob.shape[0], blob.shape[1]);
    let row: usize = x_shape[1..].iter().product();
    if x_shape.len() < 2 || row != inp {
        return Err(Error::dim(format!("input {x_shape:?} does not flatten to [batch, {inp}]")));
    }
    Ok((x_shape[0], inp, out))
}

fn check_bias<T>(bias: Option<&Tensor<T>>, out: usize) -> Result<()>
where
    T: Copy,
{
    match bias {
        Some(b) if b.len() != out => Err(Error::dim(format!("bias has {} entries, expected {out}", b.len()))),
        _ => Ok(()),
    }
}

/// Float sparse FC layer: `y[b, o] += w * x[b, i]` for each decoded `(o, i)`.
pub fn sparse_fc_infer<T: Scalar>(
    x: &Tensor<T>,
    blob: &EncodedLayerBlob,
    bias: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, MacCount)> {
    let (batch, inp, out) = fc_shape(blob, x.shape())?;
    check_bias(bias, out)?;
    let xd = x.data();
    let mut y = vec![T::zero(); batch * out];
    let mut macs = 0u64;
    let mut dec = Decoder::new(blob)?;
    while let Some((addr, v)) = dec.step()? {
        let (o, i) = (addr as usize / inp, addr as usize % inp);
        for b in 0..batch {
            let xv = xd[b * inp + i];
            let acc = &mut y[b * out + o];
            *acc = if v > 0 { *acc + xv } else { *acc - xv };
        }
        macs += batch as u64;
    }
    add_bias_rows(&mut y, bias, out);
    Ok((Tensor::from_vec(&[batch, out], y)?, MacCount(macs)))
}

fn add_bias_rows<T: Scalar>(y: &mut [T], bias: Option<&Tensor<T>>, out: usize) {
    if let Some(b) = bias {
        for row in y.chunks_mut(out) {
            for (acc, &bv) in row.iter_mut().zip(b.data()) {
                *acc = *acc + bv;
            }
        }
    }
}

/// Integer sparse FC layer over activations in `{-1, 0, +1}`; the
/// arithmetic content of XNOR-popcount.
pub fn sparse_fc_infer_binary(x: &Tensor<i8>, blob: &EncodedLayerBlob) -> Result<(Tensor<i32>, MacCount)> {
    let (batch, inp, out) = fc_shape(blob, x.shape())?;
    let xd = x.data();
    let mut y = vec![0i32; batch * out];
    let mut macs = 0u64;
    let mut dec = Decoder::new(blob)?;
    while let Some((addr, v)) = dec.step()? {
        let (o, i) = (addr as usize / inp, addr as usize % inp);
        for b in 0..batch {
            y[b * out + o] += v as i32 * xd[b * inp + i] as i32;
        }
        macs += batch as u64;
    }
    Ok((Tensor::from_vec(&[batch, out], y)?, MacCount(macs)))
}

/// Dense FC oracle with canonical `[out, in]` ternary weights. Counts
/// `n * batch` MACs.
pub fn dense_ternary_infer<T: Scalar>(
    x: &Tensor<T>,
    w_q: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, MacCount)> {
    let y = fc_forward(x, &w_q.transpose2()?, bias)?;
    Ok((y, MacCount((w_q.len() * x.rows()) as u64)))
}

/// Integer dense FC oracle.
pub fn dense_ternary_infer_binary(x: &Tensor<i8>, w_q: &Tensor<i8>) -> Result<(Tensor<i32>, MacCount)> {
    if w_q.ndim() != 2 || x.ndim() < 2 || x.row_len() != w_q.shape()[1] {
        return Err(Error::dim(format!("cannot apply {:?} weights to {:?}", w_q.shape(), x.shape())));
    }
    let (batch, out, inp) = (x.rows(), w_q.shape()[0], w_q.shape()[1]);
    let mut y = vec![0i32; batch * out];
    for b in 0..batch {
        for o in 0..out {
            let mut acc = 0i32;
            for i in 0..inp {
                acc += w_q.data()[o * inp + i] as i32 * x.data()[b * inp + i] as i32;
            }
            y[b * out + o] = acc;
        }
    }
    Ok((Tensor::from_vec(&[batch, out], y)?, MacCount((w_q.len() * batch) as u64)))
}

/// Applies each decoded kernel tap to every output position of every
/// image. `op(acc, x, w)` accumulates one product.
fn sparse_conv_core<X: Copy, Y: Copy>(
    x: &Tensor<X>,
    blob: &EncodedLayerBlob,
    params: ConvParams,
    zero: Y,
    op: impl Fn(Y, X, i8) -> Y,
) -> Result<(Vec<Y>, Vec<usize>, MacCount)> {
    if blob.shape.len() != 4 {
        return Err(Error::dim(format!("conv blob must be [F, C, kh, kw], got {:?}", blob.shape)));
    }
    let g = conv_geometry(x.shape(), &blob.shape, params)?;
    let plane = g.out_h * g.out_w;
    let in_plane = g.height * g.width;
    let xd = x.data();
    let mut y = vec![zero; g.batch * g.filters * plane];
    let mut macs = 0u64;
    let mut dec = Decoder::new(blob)?;
    while let Some((addr, v)) = dec.step()? {
        let a = addr as usize;
        let j = a % g.kw;
        let i = (a / g.kw) % g.kh;
        let c = (a / (g.kw * g.kh)) % g.channels;
        let f = a / (g.kw * g.kh * g.channels);
        let (oh_lo, oh_hi) = g.valid_out_range(i, g.height, g.out_h);
        let (ow_lo, ow_hi) = g.valid_out_range(j, g.width, g.out_w);
        for b in 0..g.batch {
            let xp = &xd[(b * g.channels + c) * in_plane..][..in_plane];
            let yp = &mut y[(b * g.filters + f) * plane..][..plane];
            for oh in oh_lo..oh_hi {
                let ih = oh * g.stride + i - g.pad;
                for ow in ow_lo..ow_hi {
                    let iw = ow * g.stride + j - g.pad;
                    let acc = &mut yp[oh * g.out_w + ow];
                    *acc = op(*acc, xp[ih * g.width + iw], v);
                }
            }
        }
        // Taps that land in the zero padding still occupy a PE slot.
        macs += (g.batch * plane) as u64;
    }
    Ok((y, vec![g.batch, g.filters, g.out_h, g.out_w], MacCount(macs)))
}

/// Float sparse convolution; output equals `conv2d_forward` on the decoded
/// kernel.
pub fn sparse_conv_infer<T: Scalar>(
    x: &Tensor<T>,
    blob: &EncodedLayerBlob,
    bias: Option<&Tensor<T>>,
    params: ConvParams,
) -> Result<(Tensor<T>, MacCount)> {
    let filters = *blob.shape.first().unwrap_or(&0);
    check_bias(bias, filters)?;
    let (mut y, shape, macs) =
        sparse_conv_core(x, blob, params, T::zero(), |acc, xv, w| if w > 0 { acc + xv } else { acc - xv })?;
    if let Some(b) = bias {
        let plane = shape[2] * shape[3];
        for (idx, chunk) in y.chunks_mut(plane).enumerate() {
            let bv = b.data()[idx % filters];
            for v in chunk {
                *v = *v + bv;
            }
        }
    }
    Ok((Tensor::from_vec(&shape, y)?, macs))
}

/// Integer sparse convolution over activations in `{-1, 0, +1}`.
pub fn sparse_conv_infer_binary(
    x: &Tensor<i8>,
    blob: &EncodedLayerBlob,
    params: ConvParams,
) -> Result<(Tensor<i32>, MacCount)> {
    let (y, shape, macs) = sparse_conv_core(x, blob, params, 0i32, |acc, xv, w| acc + xv as i32 * w as i32)?;
    Ok((Tensor::from_vec(&shape, y)?, macs))
}

/// `Some` when every entry is exactly `-1`, `0`, or `+1`.
pub fn as_ternary_activations<T: Scalar>(x: &Tensor<T>) -> Option<Tensor<i8>> {
    let mut out = Vec::with_capacity(x.len());
    for &v in x.data() {
        out.push(if v.is_zero() {
            0
        } else if v == T::one() {
            1
        } else if v == -T::one() {
            -1
        } else {
            return None;
        });
    }
    Tensor::from_vec(x.shape(), out).ok()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SparseRunStats {
    pub macs: MacCount,
    /// Layers that ran on the integer path.
    pub integer_layers: usize,
    pub float_layers: usize,
}

/// Inference-mode forward pass with every ternary layer's weights taken
/// from `blobs` (in ternary-layer order) through the decoder. Layers whose
/// inputs are all in `{-1, 0, +1}` use the integer kernels.
pub fn sparse_forward(
    net: &Network<f32>,
    blobs: &[EncodedLayerBlob],
    x: &Tensor<f32>,
) -> Result<(Tensor<f32>, SparseRunStats)> {
    let ternary_count = net.ternary_layers().count();
    if blobs.len() != ternary_count {
        return Err(Error::dim(format!("{} encoded layers for {ternary_count} ternary layers", blobs.len())));
    }
    let mut stats = SparseRunStats::default();
    let mut blobs = blobs.iter();
    let mut cur = x.clone();
    for layer in &net.layers {
        cur = match layer {
            Layer::Weight(w) if w.weights.ternary().is_some() => {
                let blob = blobs.next().unwrap();
                if blob.shape != w.canonical_shape() {
                    return Err(Error::dim(format!(
                        "encoded shape {:?} does not match layer shape {:?}",
                        blob.shape,
                        w.canonical_shape()
                    )));
                }
                let int_input = as_ternary_activations(&cur);
                let (y, macs) = match (w.kind, int_input) {
                    (WeightKind::Fc, Some(xi)) => {
                        stats.integer_layers += 1;
                        let (yi, m) = sparse_fc_infer_binary(&xi, blob)?;
                        (int_to_float(&yi, w.bias.as_ref(), 1)?, m)
                    }
                    (WeightKind::Fc, None) => {
                        stats.float_layers += 1;
                        sparse_fc_infer(&cur, blob, w.bias.as_ref())?
                    }
                    (WeightKind::Conv(p), Some(xi)) => {
                        stats.integer_layers += 1;
                        let (yi, m) = sparse_conv_infer_binary(&xi, blob, p)?;
                        let plane = yi.shape()[2] * yi.shape()[3];
                        (int_to_float(&yi, w.bias.as_ref(), plane)?, m)
                    }
                    (WeightKind::Conv(p), None) => {
                        stats.float_layers += 1;
                        sparse_conv_infer(&cur, blob, w.bias.as_ref(), p)?
                    }
                };
                stats.macs += macs;
                y
            }
            Layer::Weight(w) => w.forward(&cur)?,
            Layer::BatchNorm(bn) => bn.forward_infer(&cur)?,
            Layer::BinaryActivation => binary_activation(&cur),
            Layer::Relu => relu(&cur),
            Layer::SoftmaxXent => cur,
        };
    }
    Ok((cur, stats))
}

/// Integer accumulators to float plus bias; `plane` consecutive outputs
/// share one bias entry.
fn int_to_float(y: &Tensor<i32>, bias: Option<&Tensor<f32>>, plane: usize) -> Result<Tensor<f32>> {
    let channels = y.shape()[1];
    let data = y
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &v)| {
            let b = bias.map_or(0.0, |b| b.data()[(idx / plane) % channels]);
            v as f32 + b
        })
        .collect();
    Tensor::from_vec(y.shape(), data)
}
