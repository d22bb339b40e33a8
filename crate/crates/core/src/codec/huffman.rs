//! Canonical Huffman codes over index deltas.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use super::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

pub const MAX_CODE_LEN: u8 = 63;

/// Huffman code lengths for `freqs`, returned in canonical order
/// (ascending length, then symbol).
///
/// Among optimal length assignments, shorter codes go to more frequent
/// symbols and, on equal frequency, to smaller symbols. A single-symbol
/// alphabet gets length 1.
pub fn code_lengths(freqs: &BTreeMap<u32, u64>) -> Result<Vec<(u32, u8)>> {
    if freqs.is_empty() {
        return Ok(Vec::new());
    }
    let symbols: Vec<(u32, u64)> = freqs.iter().map(|(&s, &f)| (s, f)).collect();
    let m = symbols.len();
    let mut depths = vec![0u32; m];
    if m == 1 {
        depths[0] = 1;
    } else {
        // Node ids: leaves 0..m, internal nodes from m upward.
        let mut parent = vec![usize::MAX; 2 * m - 1];
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
            symbols.iter().enumerate().map(|(i, &(_, f))| Reverse((f, i))).collect();
        let mut next = m;
        while heap.len() > 1 {
            let Reverse((fa, a)) = heap.pop().unwrap();
            let Reverse((fb, b)) = heap.pop().unwrap();
            parent[a] = next;
            parent[b] = next;
            heap.push(Reverse((fa.saturating_add(fb), next)));
            next += 1;
        }
        for (leaf, d) in depths.iter_mut().enumerate() {
            let mut node = leaf;
            while parent[node] != usize::MAX {
                node = parent[node];
                *d += 1;
            }
        }
    }
    if depths.iter().any(|&d| d > MAX_CODE_LEN as u32) {
        return Err(Error::config(format!("Huffman code longer than {MAX_CODE_LEN} bits")));
    }

    depths.sort_unstable();
    let mut by_priority = symbols;
    by_priority.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut book: Vec<(u32, u8)> = by_priority.iter().zip(&depths).map(|(&(s, _), &d)| (s, d as u8)).collect();
    book.sort_by_key(|&(s, l)| (l, s));
    Ok(book)
}

/// A validated canonical codebook.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codebook {
    entries: Vec<(u32, u8)>,
    codes: Vec<u64>,
    index: HashMap<u32, usize>,
}

impl Codebook {
    /// Rebuilds codes from `(symbol, length)` pairs.
    ///
    /// Rejects pairs not in canonical order, duplicate or zero symbols,
    /// lengths outside `1..=63`, and length sets with Kraft sum above 1.
    pub fn from_lengths(entries: Vec<(u32, u8)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        let mut kraft: u128 = 0;
        for (i, &(s, l)) in entries.iter().enumerate() {
            if s == 0 {
                return Err(Error::corrupt("codebook contains delta 0"));
            }
            if l == 0 || l > MAX_CODE_LEN {
                return Err(Error::corrupt(format!("code length {l} outside 1..={MAX_CODE_LEN}")));
            }
            if !seen.insert(s) {
                return Err(Error::corrupt(format!("symbol {s} appears twice in codebook")));
            }
            if i > 0 && (entries[i - 1].1, entries[i - 1].0) >= (l, s) {
                return Err(Error::corrupt("codebook is not in canonical (length, symbol) order"));
            }
            kraft += 1u128 << (MAX_CODE_LEN - l);
        }
        if kraft > 1u128 << MAX_CODE_LEN {
            return Err(Error::corrupt("codebook violates the Kraft inequality"));
        }
        let mut codes = Vec::with_capacity(entries.len());
        let mut code = 0u64;
        let mut prev_len = entries.first().map_or(0, |e| e.1);
        for &(_, l) in &entries {
            code <<= l - prev_len;
            codes.push(code);
            code += 1;
            prev_len = l;
        }
        let index = entries.iter().enumerate().map(|(i, &(s, _))| (s, i)).collect();
        Ok(Codebook { entries, codes, index })
    }

    pub fn from_frequencies(freqs: &BTreeMap<u32, u64>) -> Result<Self> {
        Codebook::from_lengths(code_lengths(freqs)?)
    }

    pub fn entries(&self) -> &[(u32, u8)] {
        &self.entries
    }

    /// `(code, length)` for `symbol`.
    pub fn code(&self, symbol: u32) -> Option<(u64, u8)> {
        self.index.get(&symbol).map(|&i| (self.codes[i], self.entries[i].1))
    }

    /// Code as a string of `0`/`1` characters.
    pub fn code_string(&self, symbol: u32) -> Option<String> {
        self.code(symbol).map(|(c, l)| (0..l).rev().map(|i| if (c >> i) & 1 == 1 { '1' } else { '0' }).collect())
    }

    pub fn write(&self, symbol: u32, out: &mut BitWriter) -> Result<()> {
        let (c, l) = self.code(symbol).ok_or_else(|| Error::config(format!("symbol {symbol} not in codebook")))?;
        out.write(c, l);
        Ok(())
    }

    /// Reads one codeword; `Ok(None)` if the stream ends before any bit.
    pub fn read(&self, r: &mut BitReader) -> Result<Option<u32>> {
        if r.remaining() == 0 {
            return Ok(None);
        }
        let mut code = 0u64;
        let mut len = 0u8;
        // Entries are sorted by length, so a forward cursor tracks the
        // block of codes with the current length.
        let mut i = 0;
        while len < MAX_CODE_LEN {
            let bit = r.read_bit().ok_or_else(|| Error::corrupt("payload ends inside a codeword"))?;
            code = (code << 1) | bit as u64;
            len += 1;
            while i < self.entries.len() && self.entries[i].1 < len {
                i += 1;
            }
            let start = i;
            let mut end = i;
            while end < self.entries.len() && self.entries[end].1 == len {
                end += 1;
            }
            if end > start && code >= self.codes[start] && code - self.codes[start] < (end - start) as u64 {
                return Ok(Some(self.entries[start + (code - self.codes[start]) as usize].0));
            }
        }
        Err(Error::corrupt("no codeword matches the payload"))
    }
}
