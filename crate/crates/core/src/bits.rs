//! Packed N-bit measurement outcomes.
//!
//! Bit `i` of a [`BitString`] is the outcome of qubit `i`. The hexadecimal
//! form prints the string as one big-endian integer in which qubit 0 is the
//! least significant bit, zero-padded to `ceil(N / 4)` digits.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64).max(1)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Self::zeros(len);
        for w in b.words.iter_mut() {
            *w = u64::MAX;
        }
        b.clear_padding();
        b
    }

    /// Bits `0..len` taken from the low end of `value`.
    pub fn from_u64(len: usize, value: u64) -> Self {
        let mut b = Self::zeros(len);
        b.words[0] = value;
        b.clear_padding();
        b
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Self::zeros(bits.len());
        for (i, &bit) in bits.iter().enumerate() {
            b.set(i, bit);
        }
        b
    }

    /// Parses a string of `'0'`/`'1'` characters, qubit 0 first.
    pub fn from_binary(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse {
                    line: 0,
                    msg: format!("invalid bit character {c:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bools(&bits))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// The low 64 bits; exact whenever `len <= 64`.
    pub fn as_u64(&self) -> u64 {
        self.words[0]
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn xor_assign(&mut self, other: &BitString) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    pub fn complement(&self) -> BitString {
        let mut out = self.clone();
        for w in out.words.iter_mut() {
            *w = !*w;
        }
        out.clear_padding();
        out
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Parity of the bits selected by `mask`.
    pub fn masked_parity(&self, mask: &BitString) -> bool {
        let ones: u32 = self
            .words
            .iter()
            .zip(&mask.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        ones & 1 == 1
    }

    /// Number of adjacent unequal pairs `(i, i + 1)` on the open chain.
    pub fn kink_count(&self) -> usize {
        if self.len < 2 {
            return 0;
        }
        let mut total = 0u32;
        let nw = self.words.len();
        for w in 0..nw {
            let cur = self.words[w];
            let next_low = if w + 1 < nw { self.words[w + 1] & 1 } else { 0 };
            let shifted = (cur >> 1) | (next_low << 63);
            let mut diff = cur ^ shifted;
            // bond i compares bits i and i+1, so only bonds 0..len-1 exist
            let first_bond = w * 64;
            let bonds_here = (self.len - 1).saturating_sub(first_bond).min(64);
            if bonds_here < 64 {
                diff &= (1u64 << bonds_here) - 1;
            }
            total += diff.count_ones();
        }
        total as usize
    }

    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4).max(1);
        let mut s = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let bit = d * 4;
            let nibble = (self.words[bit / 64] >> (bit % 64)) & 0xf;
            s.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        s
    }

    pub fn from_hex(len: usize, hex: &str) -> Result<Self> {
        let mut b = Self::zeros(len);
        let n = hex.len();
        for (pos, c) in hex.chars().enumerate() {
            let v = c.to_digit(16).ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("invalid hex digit {c:?}"),
            })? as u64;
            let base = (n - 1 - pos) * 4;
            for j in 0..4 {
                if (v >> j) & 1 == 1 {
                    if base + j >= len {
                        return Err(Error::Parse {
                            line: 0,
                            msg: format!("hex string {hex} overflows {len} bits"),
                        });
                    }
                    b.set(base + j, true);
                }
            }
        }
        Ok(b)
    }

    fn clear_padding(&mut self) {
        let rem = self.len % 64;
        let full = self.len / 64;
        if rem != 0 {
            self.words[full] &= (1u64 << rem) - 1;
        }
        for w in self.words.iter_mut().skip(full + usize::from(rem != 0)) {
            *w = 0;
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(")?;
        for i in 0..self.len {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        Ok(())
    }
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BitString::from_binary(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kink_examples() {
        for (s, k) in [("0000", 0), ("0011", 1), ("0101", 3), ("1", 0), ("10", 1)] {
            assert_eq!(BitString::from_binary(s).unwrap().kink_count(), k, "{s}");
        }
    }

    #[test]
    fn kinks_across_word_boundary() {
        let mut b = BitString::zeros(130);
        b.set(63, true);
        // bonds 62 and 63 see a domain wall
        assert_eq!(b.kink_count(), 2);
        b.set(129, true);
        assert_eq!(b.kink_count(), 3);
    }

    #[test]
    fn hex_layout() {
        let b = BitString::from_binary("10000").unwrap();
        assert_eq!(b.to_hex(), "01");
        let b = BitString::from_binary("00001").unwrap();
        assert_eq!(b.to_hex(), "10");
        assert!(BitString::from_hex(5, "20").is_err());
    }

    fn naive_kinks(bits: &[bool]) -> usize {
        bits.windows(2).filter(|w| w[0] != w[1]).count()
    }

    proptest! {
        #[test]
        fn kink_count_matches_naive(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let b = BitString::from_bools(&bits);
            prop_assert_eq!(b.kink_count(), naive_kinks(&bits));
            // global spin flip leaves the number of domain walls unchanged
            prop_assert_eq!(b.complement().kink_count(), b.kink_count());
        }

        #[test]
        fn hex_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            let b = BitString::from_bools(&bits);
            prop_assert_eq!(BitString::from_hex(bits.len(), &b.to_hex()).unwrap(), b);
        }
    }
}
