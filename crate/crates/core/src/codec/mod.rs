//! Sparse encodings of ternary weight tensors.
//!
//! Both codecs walk the nonzeros of the canonical flattening in index order
//! and store, per nonzero, the distance from the previous nonzero followed
//! by one sign bit (`0` for `+1`, `1` for `-1`). The first distance is
//! measured from a virtual index `-1`, so every stored delta is at least 1.
//! RLE stores deltas in a fixed per-layer width; HC stores canonical
//! Huffman codewords.

pub mod bits;
pub mod huffman;
pub mod rle;
pub mod size;
pub mod stw1;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use bits::{BitReader, BitWriter};
use huffman::Codebook;

pub use size::{dense_size_bytes, size_report, LayerSize, SizeReport, BYTES_PER_MB};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecTag {
    Rle = 0,
    Hc = 1,
}

impl CodecTag {
    pub const ALL: [CodecTag; 2] = [CodecTag::Rle, CodecTag::Hc];

    pub fn name(self) -> &'static str {
        match self {
            CodecTag::Rle => "rle",
            CodecTag::Hc => "hc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CodecHeader {
    /// Delta field width in bits.
    Rle { width: u8 },
    /// `(delta, code length)` pairs in canonical order.
    Hc { codebook: Vec<(u32, u8)> },
}

/// One layer's `w_q` as a self-describing bitstream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedLayerBlob {
    pub shape: Vec<usize>,
    pub n: u64,
    pub k: u64,
    pub header: CodecHeader,
    pub payload: Vec<u8>,
    pub payload_bits: u64,
}

/// A nonzero weight: flat index and sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Nonzero {
    pub index: u64,
    pub negative: bool,
}

impl Nonzero {
    pub fn value(self) -> i8 {
        if self.negative {
            -1
        } else {
            1
        }
    }
}

impl EncodedLayerBlob {
    pub fn codec(&self) -> CodecTag {
        match self.header {
            CodecHeader::Rle { .. } => CodecTag::Rle,
            CodecHeader::Hc { .. } => CodecTag::Hc,
        }
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader::new(&self.payload, self.payload_bits)
    }

    /// Structural checks shared by both codecs.
    pub fn check_frame(&self) -> Result<()> {
        let n = self.shape.iter().try_fold(1u64, |a, &d| a.checked_mul(d as u64));
        if self.shape.is_empty() || self.shape.contains(&0) || n != Some(self.n) {
            return Err(Error::corrupt(format!("shape {:?} does not hold n = {}", self.shape, self.n)));
        }
        if self.k > self.n {
            return Err(Error::corrupt(format!("k = {} exceeds n = {}", self.k, self.n)));
        }
        if self.payload.len() as u64 != self.payload_bits.div_ceil(8) {
            return Err(Error::corrupt(format!("{} payload bytes for {} bits", self.payload.len(), self.payload_bits)));
        }
        Ok(())
    }
}

/// Nonzeros of a ternary slice in index order.
pub fn nonzeros<T: Scalar>(data: &[T]) -> Result<Vec<Nonzero>> {
    let mut out = Vec::new();
    for (i, &v) in data.iter().enumerate() {
        if v.is_zero() {
            continue;
        }
        let negative = if v == T::one() {
            false
        } else if v == -T::one() {
            true
        } else {
            return Err(Error::NotTernary { index: i, value: v.as_f64() });
        };
        out.push(Nonzero { index: i as u64, negative });
    }
    Ok(out)
}

/// Index deltas from the virtual index `-1`.
pub fn deltas(nz: &[Nonzero]) -> Vec<u64> {
    let mut prev: Option<u64> = None;
    nz.iter()
        .map(|z| {
            let d = match prev {
                None => z.index + 1,
                Some(p) => z.index - p,
            };
            prev = Some(z.index);
            d
        })
        .collect()
}

/// Advances a decoder address by one delta, enforcing `delta >= 1` and
/// `address < n`.
#[inline]
pub fn advance(address: Option<u64>, delta: u64, n: u64) -> Result<u64> {
    if delta == 0 {
        return Err(Error::corrupt("zero index delta"));
    }
    let next = match address {
        None => delta - 1,
        Some(a) => a.checked_add(delta).ok_or_else(|| Error::corrupt("index overflow"))?,
    };
    if next >= n {
        return Err(Error::corrupt(format!("index {next} past end of tensor (n = {n})")));
    }
    Ok(next)
}

pub fn encode<T: Scalar>(codec: CodecTag, w_q: &Tensor<T>) -> Result<EncodedLayerBlob> {
    match codec {
        CodecTag::Rle => rle::encode(w_q),
        CodecTag::Hc => hc_encode(w_q),
    }
}

/// Bulk decode of all records.
pub fn decode_nonzeros(blob: &EncodedLayerBlob) -> Result<Vec<Nonzero>> {
    match &blob.header {
        CodecHeader::Rle { .. } => rle::decode_nonzeros(blob),
        CodecHeader::Hc { .. } => hc_decode_nonzeros(blob),
    }
}

pub fn decode<T: Scalar>(blob: &EncodedLayerBlob) -> Result<Tensor<T>> {
    let nz = decode_nonzeros(blob)?;
    let n = usize::try_from(blob.n).map_err(|_| Error::corrupt("tensor too large"))?;
    let mut data = vec![T::zero(); n];
    for z in nz {
        data[z.index as usize] = if z.negative { -T::one() } else { T::one() };
    }
    Tensor::from_vec(&blob.shape, data)
}

pub fn hc_encode<T: Scalar>(w_q: &Tensor<T>) -> Result<EncodedLayerBlob> {
    let nz = nonzeros(w_q.data())?;
    let ds = deltas(&nz);
    let mut freqs: BTreeMap<u32, u64> = BTreeMap::new();
    for &d in &ds {
        let s = u32::try_from(d).map_err(|_| Error::config(format!("delta {d} exceeds the 32-bit symbol range")))?;
        *freqs.entry(s).or_default() += 1;
    }
    let book = Codebook::from_frequencies(&freqs)?;
    let mut w = BitWriter::new();
    for (z, &d) in nz.iter().zip(&ds) {
        book.write(d as u32, &mut w)?;
        w.write_bit(z.negative);
    }
    let (payload, payload_bits) = w.finish();
    Ok(EncodedLayerBlob {
        shape: w_q.shape().to_vec(),
        n: w_q.len() as u64,
        k: nz.len() as u64,
        header: CodecHeader::Hc { codebook: book.entries().to_vec() },
        payload,
        payload_bits,
    })
}

fn hc_decode_nonzeros(blob: &EncodedLayerBlob) -> Result<Vec<Nonzero>> {
    blob.check_frame()?;
    let CodecHeader::Hc { codebook } = &blob.header else {
        return Err(Error::corrupt("expected an HC blob"));
    };
    if blob.k > 0 && codebook.is_empty() {
        return Err(Error::corrupt("empty codebook with nonzero count"));
    }
    let book = Codebook::from_lengths(codebook.clone())?;
    let mut r = blob.reader();
    let mut out = Vec::with_capacity(blob.k.min(1 << 24) as usize);
    let mut addr = None;
    for _ in 0..blob.k {
        let d = book.read(&mut r)?.ok_or_else(|| Error::corrupt("payload truncated"))?;
        let negative = r.read_bit().ok_or_else(|| Error::corrupt("payload ends before sign bit"))?;
        let a = advance(addr, d as u64, blob.n)?;
        addr = Some(a);
        out.push(Nonzero { index: a, negative });
    }
    if r.remaining() != 0 {
        return Err(Error::corrupt(format!("{} trailing payload bits", r.remaining())));
    }
    Ok(out)
}
