//! The STW1 weight file: a sequence of encoded layers, little-endian.
//!
//! ```text
//! "STW1"                 4 bytes
//! layer count            u32
//! per layer:
//!   codec tag            u8   (0 = RLE, 1 = HC)
//!   ndim                 u8
//!   shape                u32 x ndim
//!   n                    u64  element count
//!   k                    u64  nonzero count
//!   header   RLE:        u8   delta width d
//!            HC:         u16  alphabet size, then per symbol u32 delta + u8 code length
//!   payload bit count    u64
//!   payload              ceil(bits / 8) bytes, zero-padded
//! ```

use super::{CodecHeader, CodecTag, EncodedLayerBlob};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"STW1";
pub const FILE_HEADER_BYTES: usize = 8;

/// Serialized size of one layer record.
pub fn record_len(blob: &EncodedLayerBlob) -> usize {
    let header = match &blob.header {
        CodecHeader::Rle { .. } => 1,
        CodecHeader::Hc { codebook } => 2 + 5 * codebook.len(),
    };
    2 + 4 * blob.shape.len() + 16 + header + 8 + blob.payload.len()
}

pub fn write_record(blob: &EncodedLayerBlob, out: &mut Vec<u8>) -> Result<()> {
    let ndim = u8::try_from(blob.shape.len()).map_err(|_| Error::config("too many dimensions"))?;
    out.push(blob.codec() as u8);
    out.push(ndim);
    for &d in &blob.shape {
        let d = u32::try_from(d).map_err(|_| Error::config(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&blob.n.to_le_bytes());
    out.extend_from_slice(&blob.k.to_le_bytes());
    match &blob.header {
        CodecHeader::Rle { width } => out.push(*width),
        CodecHeader::Hc { codebook } => {
            let m = u16::try_from(codebook.len())
                .map_err(|_| Error::config(format!("{} distinct deltas exceed the u16 alphabet", codebook.len())))?;
            out.extend_from_slice(&m.to_le_bytes());
            for &(s, l) in codebook {
                out.extend_from_slice(&s.to_le_bytes());
                out.push(l);
            }
        }
    }
    out.extend_from_slice(&blob.payload_bits.to_le_bytes());
    out.extend_from_slice(&blob.payload);
    Ok(())
}

pub fn write(blobs: &[EncodedLayerBlob]) -> Result<Vec<u8>> {
    let count = u32::try_from(blobs.len()).map_err(|_| Error::config("too many layers"))?;
    let mut out = Vec::with_capacity(FILE_HEADER_BYTES + blobs.iter().map(record_len).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    for b in blobs {
        write_record(b, &mut out)?;
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::corrupt(format!("file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a file and checks each record's framing; payload contents are
/// validated on decode.
pub fn read(bytes: &[u8]) -> Result<Vec<EncodedLayerBlob>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::corrupt("missing STW1 magic"));
    }
    let count = c.u32()?;
    let mut blobs = Vec::new();
    for _ in 0..count {
        let tag = c.u8()?;
        let ndim = c.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u32()? as usize);
        }
        let n = c.u64()?;
        let k = c.u64()?;
        let header = match tag {
            t if t == CodecTag::Rle as u8 => CodecHeader::Rle { width: c.u8()? },
            t if t == CodecTag::Hc as u8 => {
                let m = c.u16()? as usize;
                let mut codebook = Vec::with_capacity(m);
                for _ in 0..m {
                    codebook.push((c.u32()?, c.u8()?));
                }
                CodecHeader::Hc { codebook }
            }
            t => return Err(Error::corrupt(format!("unknown codec tag {t}"))),
        };
        let payload_bits = c.u64()?;
        let len = usize::try_from(payload_bits.div_ceil(8)).map_err(|_| Error::corrupt("payload too large"))?;
        let payload = c.take(len)?.to_vec();
        let blob = EncodedLayerBlob { shape, n, k, header, payload, payload_bits };
        blob.check_frame()?;
        blobs.push(blob);
    }
    if c.pos != bytes.len() {
        return Err(Error::corrupt(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(blobs)
}
