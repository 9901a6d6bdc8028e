//! Bit strings and Elias gamma codes.
//!
//! Bits are stored most-significant first. A [`BitString`] flushes to bytes
//! padded with zeros at the end; decoders always work from an explicit bit
//! count and never look at the padding.

use std::fmt;

use bitvec::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: BitVec<u8, Msb0>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse a string of `'0'` and `'1'` characters.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for (i, c) in text.chars().enumerate() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                _ => return Err(Error::Domain(format!("character {i} of bit string is {c:?}"))),
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.bits.get(index).map(|b| *b)
    }

    /// Append the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        for k in (0..width).rev() {
            self.bits.push((value >> k) & 1 == 1);
        }
    }

    pub fn extend(&mut self, other: &BitString) {
        self.bits.extend_from_bitslice(&other.bits);
    }

    /// The first `len` bits.
    pub fn prefix(&self, len: usize) -> BitString {
        BitString {
            bits: self.bits[..len.min(self.len())].to_bitvec(),
        }
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        self.len() <= other.len() && other.bits[..self.len()] == self.bits
    }

    /// Flip one bit in place.
    pub fn flip(&mut self, index: usize) {
        let b = self.bits[index];
        self.bits.set(index, !b);
    }

    /// Bytes with the final byte zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bits = self.bits.clone();
        bits.set_uninitialized(false);
        bits.into_vec()
    }

    /// Rebuild from padded bytes and an exact bit count.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::TruncatedStream {
                at: bytes.len() * 8,
                context: "byte buffer shorter than declared bit length",
            });
        }
        let mut bits = BitVec::<u8, Msb0>::from_slice(bytes);
        bits.truncate(len);
        Ok(Self { bits })
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader::new(self)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits.iter() {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

/// Sequential reader over a [`BitString`].
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    source: &'a BitString,
    cursor: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(source: &'a BitString) -> Self {
        Self { source, cursor: 0 }
    }

    pub fn at(source: &'a BitString, cursor: usize) -> Self {
        Self { source, cursor }
    }

    pub fn position(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.source.len().saturating_sub(self.cursor)
    }

    pub fn read_bit(&mut self, context: &'static str) -> Result<bool> {
        let bit = self.source.get(self.cursor).ok_or(Error::TruncatedStream {
            at: self.cursor,
            context,
        })?;
        self.cursor += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, width: u32, context: &'static str) -> Result<u64> {
        if self.remaining() < width as usize {
            return Err(Error::TruncatedStream {
                at: self.source.len(),
                context,
            });
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit(context)? as u64;
        }
        Ok(v)
    }
}

/// Elias gamma codeword of `i >= 1`: `floor(log2 i)` zeros followed by the
/// binary expansion of `i`, for `2 floor(log2 i) + 1` bits in total.
pub fn elias_encode(i: u64) -> Result<BitString> {
    if i == 0 {
        return Err(Error::Domain("Elias gamma code is defined for integers >= 1".into()));
    }
    let mut out = BitString::new();
    elias_encode_into(i, &mut out);
    Ok(out)
}

pub(crate) fn elias_encode_into(i: u64, out: &mut BitString) {
    debug_assert!(i >= 1);
    let width = 64 - i.leading_zeros();
    out.push_bits(0, width - 1);
    out.push_bits(i, width);
}

/// Bit length of the gamma codeword of `i >= 1`.
pub fn elias_length(i: u64) -> usize {
    2 * (63 - i.max(1).leading_zeros() as usize) + 1
}

/// Decode one gamma codeword starting at `cursor`; returns the integer and
/// the cursor just past the codeword.
pub fn elias_decode(stream: &BitString, cursor: usize) -> Result<(u64, usize)> {
    let mut reader = BitReader::at(stream, cursor);
    let value = elias_read(&mut reader)?;
    Ok((value, reader.position()))
}

pub fn elias_read(reader: &mut BitReader<'_>) -> Result<u64> {
    let start = reader.position();
    let mut zeros = 0u32;
    while !reader.read_bit("Elias gamma length prefix")? {
        zeros += 1;
        if zeros > 63 {
            return Err(Error::MalformedStream {
                at: start,
                reason: "Elias gamma prefix longer than 63 bits".into(),
            });
        }
    }
    let tail = reader.read_bits(zeros, "Elias gamma mantissa")?;
    Ok((1u64 << zeros) | tail)
}
