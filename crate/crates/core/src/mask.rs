//! Per-trip membership bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-length bit vector, one bit per trip. Bits past `len` in the last
/// word are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResultMask {
    words: Vec<u64>,
    len: usize,
}

impl std::fmt::Debug for ResultMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ResultMask({}/{})", self.count_ones(), self.len)
    }
}

impl ResultMask {
    pub fn empty(len: usize) -> Self {
        ResultMask { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn full(len: usize) -> Self {
        let mut m = ResultMask { words: vec![u64::MAX; len.div_ceil(64)], len };
        m.clear_tail();
        m
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if b {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        ResultMask { words, len }
    }

    /// Builds a mask by testing every index.
    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut m = ResultMask::empty(len);
        for (w, word) in m.words.iter_mut().enumerate() {
            let base = w * 64;
            let end = (base + 64).min(len);
            let mut bits = 0u64;
            for i in base..end {
                bits |= (f(i) as u64) << (i - base);
            }
            *word = bits;
        }
        m
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn none(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn all(&self) -> bool {
        self.count_ones() == self.len
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + tz)
            })
        })
    }

    fn check_len(&self, other: &ResultMask) -> Result<()> {
        if self.len != other.len {
            return Err(Error::domain(format!("mask length mismatch: {} vs {}", self.len, other.len)));
        }
        Ok(())
    }

    fn zip_with(&mut self, other: &ResultMask, f: impl Fn(u64, u64) -> u64) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a = f(*a, *b);
        }
        Ok(())
    }

    pub fn and_assign(&mut self, other: &ResultMask) -> Result<()> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or_assign(&mut self, other: &ResultMask) -> Result<()> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn and_not_assign(&mut self, other: &ResultMask) -> Result<()> {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn and(&self, other: &ResultMask) -> Result<ResultMask> {
        let mut out = self.clone();
        out.and_assign(other)?;
        Ok(out)
    }

    pub fn or(&self, other: &ResultMask) -> Result<ResultMask> {
        let mut out = self.clone();
        out.or_assign(other)?;
        Ok(out)
    }

    pub fn and_not(&self, other: &ResultMask) -> Result<ResultMask> {
        let mut out = self.clone();
        out.and_not_assign(other)?;
        Ok(out)
    }

    pub fn not(&self) -> ResultMask {
        let mut out = ResultMask { words: self.words.iter().map(|w| !w).collect(), len: self.len };
        out.clear_tail();
        out
    }

    pub fn is_subset_of(&self, other: &ResultMask) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}
