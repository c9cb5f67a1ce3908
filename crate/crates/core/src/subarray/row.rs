use std::fmt;
use std::ops::{BitAnd, BitOr, BitXor, Not};

use serde::{Deserialize, Serialize};

use super::COLS;

const WORDS: usize = COLS / 64;

/// One 256-column bit vector. Column 0 is bit 0 of word 0.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Row([u64; WORDS]);

impl Row {
    pub const ZERO: Row = Row([0; WORDS]);
    pub const ONES: Row = Row([u64::MAX; WORDS]);

    pub fn from_words(words: [u64; WORDS]) -> Self {
        Row(words)
    }

    pub fn words(&self) -> [u64; WORDS] {
        self.0
    }

    /// Builds a row from the first `bits.len()` columns; the rest are 0.
    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() <= COLS, "{} bits do not fit a row", bits.len());
        let mut r = Row::ZERO;
        for (i, &b) in bits.iter().enumerate() {
            r.set(i, b);
        }
        r
    }

    /// Columns `0..n` set.
    pub fn prefix(n: usize) -> Self {
        assert!(n <= COLS);
        let mut r = Row::ZERO;
        for (w, word) in r.0.iter_mut().enumerate() {
            let lo = w * 64;
            *word = match n.saturating_sub(lo) {
                0 => 0,
                k if k >= 64 => u64::MAX,
                k => (1u64 << k) - 1,
            };
        }
        r
    }

    #[inline]
    pub fn get(&self, col: usize) -> bool {
        (self.0[col / 64] >> (col % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, col: usize, bit: bool) {
        let mask = 1u64 << (col % 64);
        if bit {
            self.0[col / 64] |= mask;
        } else {
            self.0[col / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..COLS).map(|c| self.get(c)).collect()
    }

    /// `self` on `mask` columns, `other` elsewhere.
    pub fn select(&self, mask: &Row, other: &Row) -> Row {
        (*self & *mask) | (*other & !*mask)
    }

    /// 64 hex digits; each digit packs four columns, leftmost column in its
    /// most significant bit.
    pub fn to_hex(&self) -> String {
        (0..COLS / 4)
            .map(|n| {
                let v = (0..4).fold(0u32, |acc, i| acc << 1 | u32::from(self.get(n * 4 + i)));
                char::from_digit(v, 16).expect("nibble")
            })
            .collect()
    }

    pub fn from_hex(s: &str) -> Option<Row> {
        if s.len() != COLS / 4 {
            return None;
        }
        let mut r = Row::ZERO;
        for (n, ch) in s.chars().enumerate() {
            let v = ch.to_digit(16)?;
            for i in 0..4 {
                r.set(n * 4 + i, (v >> (3 - i)) & 1 == 1);
            }
        }
        Some(r)
    }
}

impl fmt::Debug for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Row({})", self.to_hex())
    }
}

impl Not for Row {
    type Output = Row;

    fn not(self) -> Row {
        Row(self.0.map(|w| !w))
    }
}

macro_rules! bitop {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr for Row {
            type Output = Row;

            fn $f(self, rhs: Row) -> Row {
                Row(std::array::from_fn(|i| self.0[i] $op rhs.0[i]))
            }
        }
    };
}

bitop!(BitAnd, bitand, &);
bitop!(BitOr, bitor, |);
bitop!(BitXor, bitxor, ^);

/// Column-wise three-input majority.
pub fn maj(a: Row, b: Row, c: Row) -> Row {
    (a & b) | (a & c) | (b & c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_masks() {
        assert_eq!(Row::prefix(0), Row::ZERO);
        assert_eq!(Row::prefix(256), Row::ONES);
        let p = Row::prefix(70);
        assert!(p.get(69) && !p.get(70));
        assert_eq!(p.count_ones(), 70);
    }

    #[test]
    fn hex_round_trip() {
        let mut r = Row::ZERO;
        r.set(0, true);
        r.set(255, true);
        r.set(130, true);
        let hex = r.to_hex();
        assert!(hex.starts_with('8'));
        assert!(hex.ends_with('1'));
        assert_eq!(Row::from_hex(&hex), Some(r));
        assert_eq!(Row::from_hex("zz"), None);
    }
}
