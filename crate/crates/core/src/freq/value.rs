//! Fixed-width bit strings used as histogram keys.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use serde::{Deserialize, Serialize};

/// An element of the universe `{0,1}^len`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Value {
    len: u32,
    words: Vec<u64>,
}

impl Value {
    pub fn zeros(len: u32) -> Self {
        Self {
            len,
            words: vec![0; (len as usize).div_ceil(64)],
        }
    }

    pub fn from_u64(x: u64, len: u32) -> Self {
        let mut v = Self::zeros(len);
        let w = len.min(64);
        v.set_bits(0, w, x);
        v
    }

    /// All ones: the reserved non-participation token of a universe.
    pub fn ones(len: u32) -> Self {
        let mut v = Self::zeros(len);
        let mut off = 0;
        while off < len {
            let w = (len - off).min(64);
            v.set_bits(off, w, u64::MAX);
            off += w;
        }
        v
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Write the low `width` bits of `x` at bit `offset`.
    pub fn set_bits(&mut self, offset: u32, width: u32, x: u64) {
        assert!(width <= 64 && offset + width <= self.len, "bit range out of bounds");
        for i in 0..width {
            let bit = (x >> i) & 1;
            let pos = (offset + i) as usize;
            let (w, b) = (pos / 64, pos % 64);
            self.words[w] = (self.words[w] & !(1 << b)) | (bit << b);
        }
    }

    /// Read `width` bits at `offset`; bits past the end read as zero.
    pub fn bits(&self, offset: u32, width: u32) -> u64 {
        assert!(width <= 64, "at most 64 bits per read");
        let mut out = 0;
        for i in 0..width {
            let pos = offset + i;
            if pos >= self.len {
                break;
            }
            let (w, b) = ((pos / 64) as usize, pos % 64);
            out |= ((self.words[w] >> b) & 1) << i;
        }
        out
    }

    /// Hex rendering, least significant word first.
    pub fn to_hex(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}:", self.len);
        for w in &self.words {
            let _ = write!(s, "{w:016x}");
        }
        s
    }
}

/// Sequential packer for composite keys.
#[derive(Debug)]
pub struct ValueWriter {
    value: Value,
    pos: u32,
}

impl ValueWriter {
    pub fn new(len: u32) -> Self {
        Self {
            value: Value::zeros(len),
            pos: 0,
        }
    }

    pub fn push(&mut self, x: u64, width: u32) -> &mut Self {
        self.value.set_bits(self.pos, width, x);
        self.pos += width;
        self
    }

    pub fn finish(self) -> Value {
        self.value
    }
}

#[derive(Debug)]
pub struct ValueReader<'a> {
    value: &'a Value,
    pos: u32,
}

impl<'a> ValueReader<'a> {
    pub fn new(value: &'a Value) -> Self {
        Self { value, pos: 0 }
    }

    pub fn take(&mut self, width: u32) -> u64 {
        let x = self.value.bits(self.pos, width);
        self.pos += width;
        x
    }
}

/// Smallest `b` with `2^b ≥ n` (and at least 1).
pub fn bits_for(n: u64) -> u32 {
    (64 - n.saturating_sub(1).leading_zeros()).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_across_word_boundary() {
        let mut w = ValueWriter::new(130);
        w.push(0x3ff, 10).push(u64::MAX, 64).push(5, 56);
        let v = w.finish();
        let mut r = ValueReader::new(&v);
        assert_eq!(r.take(10), 0x3ff);
        assert_eq!(r.take(64), u64::MAX);
        assert_eq!(r.take(56), 5);
        assert_eq!(Value::ones(70).bits(60, 10), 0x3ff);
    }

    #[test]
    fn bits_for_examples() {
        assert_eq!(bits_for(1), 1);
        assert_eq!(bits_for(2), 1);
        assert_eq!(bits_for(3), 2);
        assert_eq!(bits_for(1024), 10);
        assert_eq!(bits_for(1025), 11);
    }

    proptest! {
        #[test]
        fn chunks_reassemble(x in any::<u64>(), width in 1u32..=64, off in 0u32..40) {
            let mut v = Value::zeros(110);
            v.set_bits(off, width, x);
            let mask = if width == 64 { u64::MAX } else { (1 << width) - 1 };
            prop_assert_eq!(v.bits(off, width), x & mask);
        }
    }
}
