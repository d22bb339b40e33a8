//! Size accounting in bytes and megabytes (10^6 bytes).

use serde::{Deserialize, Serialize};

use super::stw1::record_len;
use super::EncodedLayerBlob;
use crate::error::{Error, Result};

pub const BYTES_PER_MB: f64 = 1e6;

/// `ceil(params * bits / 8)`.
pub fn dense_size_bytes(params: u64, bits: u32) -> u64 {
    (params as u128 * bits as u128).div_ceil(8) as u64
}

pub fn megabytes(bytes: u64) -> f64 {
    bytes as f64 / BYTES_PER_MB
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerSize {
    pub params: u64,
    pub nonzeros: u64,
    pub dense_1bit_bytes: u64,
    pub dense_2bit_bytes: u64,
    /// STW1 record bytes: framing, codec header, and padded payload.
    pub rle_bytes: u64,
    pub hc_bytes: u64,
}

impl LayerSize {
    fn add(&mut self, o: &LayerSize) {
        self.params += o.params;
        self.nonzeros += o.nonzeros;
        self.dense_1bit_bytes += o.dense_1bit_bytes;
        self.dense_2bit_bytes += o.dense_2bit_bytes;
        self.rle_bytes += o.rle_bytes;
        self.hc_bytes += o.hc_bytes;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub layers: Vec<LayerSize>,
    pub total: LayerSize,
}

impl SizeReport {
    /// Dense sizes only, for a bare parameter count.
    pub fn dense(params: u64) -> Self {
        let l = LayerSize {
            params,
            dense_1bit_bytes: dense_size_bytes(params, 1),
            dense_2bit_bytes: dense_size_bytes(params, 2),
            ..Default::default()
        };
        SizeReport { layers: vec![l.clone()], total: l }
    }
}

/// Per-layer and total sizes from matching RLE and HC encodings.
pub fn size_report(rle: &[EncodedLayerBlob], hc: &[EncodedLayerBlob]) -> Result<SizeReport> {
    if rle.len() != hc.len() {
        return Err(Error::dim(format!("{} RLE layers but {} HC layers", rle.len(), hc.len())));
    }
    let mut report = SizeReport::default();
    for (r, h) in rle.iter().zip(hc) {
        if r.n != h.n || r.k != h.k {
            return Err(Error::dim("RLE and HC encodings describe different tensors"));
        }
        let l = LayerSize {
            params: r.n,
            nonzeros: r.k,
            dense_1bit_bytes: dense_size_bytes(r.n, 1),
            dense_2bit_bytes: dense_size_bytes(r.n, 2),
            rle_bytes: record_len(r) as u64,
            hc_bytes: record_len(h) as u64,
        };
        report.total.add(&l);
        report.layers.push(l);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_sizes() {
        assert_eq!(dense_size_bytes(0, 2), 0);
        assert_eq!(dense_size_bytes(9, 1), 2);
        assert_eq!(dense_size_bytes(36_400_000, 1), 4_550_000);
        assert!((megabytes(dense_size_bytes(14_020_000, 2)) - 3.505).abs() < 1e-12);
    }
}
