//! MSB-first bit packing.

/// Appends fields most-significant bit first.
#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes the low `width` bits of `value`.
    pub fn write(&mut self, value: u64, width: u8) {
        debug_assert!(width <= 64);
        for i in (0..width).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    #[inline]
    pub fn write_bit(&mut self, bit: bool) {
        let off = (self.bits % 8) as u8;
        if off == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> off;
        }
        self.bits += 1;
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    /// Bytes with the final byte zero-padded, and the exact bit count.
    pub fn finish(self) -> (Vec<u8>, u64) {
        (self.bytes, self.bits)
    }
}

/// Reads fields written by [`BitWriter`], bounded by an explicit bit length.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    len: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    /// `len` is clamped to the bits actually present.
    pub fn new(bytes: &'a [u8], len: u64) -> Self {
        BitReader { bytes, len: len.min(bytes.len() as u64 * 8), pos: 0 }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.len - self.pos
    }

    #[inline]
    pub fn read_bit(&mut self) -> Option<bool> {
        if self.pos >= self.len {
            return None;
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = byte & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Some(bit)
    }

    pub fn read(&mut self, width: u8) -> Option<u64> {
        if (width as u64) > self.remaining() {
            return None;
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_layout() {
        let mut w = BitWriter::new();
        w.write(0b11, 2);
        w.write_bit(false);
        w.write(0b10, 2);
        w.write_bit(true);
        let (bytes, bits) = w.finish();
        assert_eq!(bits, 6);
        assert_eq!(bytes, vec![0b1101_0100]);
        let mut r = BitReader::new(&bytes, bits);
        assert_eq!(r.read(2), Some(3));
        assert_eq!(r.read_bit(), Some(false));
        assert_eq!(r.read(3), Some(0b101));
        assert_eq!(r.read_bit(), None);
    }

    #[test]
    fn wide_fields_round_trip() {
        let mut w = BitWriter::new();
        w.write(u64::MAX, 64);
        w.write(5, 3);
        let (bytes, bits) = w.finish();
        let mut r = BitReader::new(&bytes, bits);
        assert_eq!(r.read(64), Some(u64::MAX));
        assert_eq!(r.read(3), Some(5));
    }
}
