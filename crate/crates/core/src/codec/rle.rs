//! Fixed-width delta records.

use super::bits::BitWriter;
use super::{advance, deltas, nonzeros, CodecHeader, EncodedLayerBlob, Nonzero};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `max(1, ceil(log2(max_delta + 1)))`: the bits needed to write `max_delta`.
pub fn delta_width(max_delta: u64) -> u8 {
    (64 - max_delta.leading_zeros()).max(1) as u8
}

pub fn encode<T: Scalar>(w_q: &Tensor<T>) -> Result<EncodedLayerBlob> {
    let nz = nonzeros(w_q.data())?;
    let ds = deltas(&nz);
    let width = delta_width(ds.iter().copied().max().unwrap_or(0));
    let mut w = BitWriter::new();
    for (z, &d) in nz.iter().zip(&ds) {
        w.write(d, width);
        w.write_bit(z.negative);
    }
    let (payload, payload_bits) = w.finish();
    Ok(EncodedLayerBlob {
        shape: w_q.shape().to_vec(),
        n: w_q.len() as u64,
        k: nz.len() as u64,
        header: CodecHeader::Rle { width },
        payload,
        payload_bits,
    })
}

pub fn decode_nonzeros(blob: &EncodedLayerBlob) -> Result<Vec<Nonzero>> {
    blob.check_frame()?;
    let CodecHeader::Rle { width } = blob.header else {
        return Err(Error::corrupt("expected an RLE blob"));
    };
    check_rle_frame(blob, width)?;
    let mut r = blob.reader();
    let mut out = Vec::with_capacity(blob.k as usize);
    let mut addr = None;
    for _ in 0..blob.k {
        let d = r.read(width).ok_or_else(|| Error::corrupt("payload truncated"))?;
        let negative = r.read_bit().ok_or_else(|| Error::corrupt("payload truncated"))?;
        let a = advance(addr, d, blob.n)?;
        addr = Some(a);
        out.push(Nonzero { index: a, negative });
    }
    Ok(out)
}

/// Width in `1..=64` and exactly `k * (width + 1)` payload bits.
pub(crate) fn check_rle_frame(blob: &EncodedLayerBlob, width: u8) -> Result<()> {
    if width == 0 || width > 64 {
        return Err(Error::corrupt(format!("delta width {width} outside 1..=64")));
    }
    let expected = blob.k.checked_mul(width as u64 + 1).ok_or_else(|| Error::corrupt("record count overflows"))?;
    if blob.payload_bits < expected {
        return Err(Error::corrupt(format!(
            "payload truncated: {} bits for {} records of {} bits",
            blob.payload_bits,
            blob.k,
            width as u64 + 1
        )));
    }
    if blob.payload_bits > expected {
        return Err(Error::corrupt(format!("{} trailing payload bits", blob.payload_bits - expected)));
    }
    Ok(())
}
