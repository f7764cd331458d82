//! Fixed-length bit vector, LSB-first within each byte.
//!
//! Bit `i` lives in byte `i / 8` at position `i % 8`. Storage is exactly
//! `ceil(len / 8)` bytes and the unused tail bits of the last byte are kept
//! zero, so a bitset has one canonical byte encoding.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitset {
    len: usize,
    bytes: Vec<u8>,
}

impl Bitset {
    pub fn zeros(len: usize) -> Self {
        Bitset {
            len,
            bytes: vec![0u8; len.div_ceil(8)],
        }
    }

    /// Rebuilds a bitset from its canonical byte encoding. Returns `None` if
    /// the byte count is wrong or any tail bit past `len` is set.
    pub fn from_bytes(len: usize, bytes: Vec<u8>) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        if !len.is_multiple_of(8) {
            if let Some(&last) = bytes.last() {
                if last >> (len % 8) != 0 {
                    return None;
                }
            }
        }
        Some(Bitset { len, bytes })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        if value {
            self.bytes[i / 8] |= 1 << (i % 8);
        } else {
            self.bytes[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }
}
