//! Fixed-length bit strings used for Pauli masks, measurement outcomes and
//! correction bits.
//!
//! Bit `j` of a string belongs to qubit `j`. The textual form lists bit 0
//! first, so `"10"` has bit 0 set and bit 1 clear.

use std::fmt;
use std::ops::BitXor;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitStringError {
    #[error("invalid bit character {0:?} (expected '0' or '1')")]
    InvalidChar(char),
    #[error("bit string lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString(vec![false; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        BitString(bits)
    }

    /// Bit `j` is bit `j` of `index`.
    pub fn from_index(index: usize, len: usize) -> Self {
        BitString((0..len).map(|j| (index >> j) & 1 == 1).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &b)| acc | ((b as usize) << j))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn set(&mut self, j: usize, value: bool) {
        self.0[j] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| !b)
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString, BitStringError> {
        if self.len() != other.len() {
            return Err(BitStringError::LengthMismatch(self.len(), other.len()));
        }
        Ok(BitString(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect()))
    }

    /// Packs as `ceil(len/8)` bytes, bit `j` at byte `j / 8`, position `j % 8`.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len().div_ceil(8)];
        for (j, &b) in self.0.iter().enumerate() {
            if b {
                out[j / 8] |= 1 << (j % 8);
            }
        }
        out
    }

    pub fn from_packed_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        // Padding bits beyond `len` must be clear.
        for j in len..bytes.len() * 8 {
            if bytes[j / 8] >> (j % 8) & 1 == 1 {
                return None;
            }
        }
        Some(BitString((0..len).map(|j| bytes[j / 8] >> (j % 8) & 1 == 1).collect()))
    }
}

impl BitXor for &BitString {
    type Output = BitString;

    /// Panics on length mismatch; use [`BitString::xor`] for a checked form.
    fn bitxor(self, rhs: &BitString) -> BitString {
        self.xor(rhs).expect("bit string length mismatch")
    }
}

impl FromStr for BitString {
    type Err = BitStringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(BitStringError::InvalidChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
