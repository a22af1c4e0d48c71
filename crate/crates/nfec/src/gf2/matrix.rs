//! Bit-packed GF(2) vectors and matrices.
//!
//! Rows are packed into 64-bit words so syndrome computation reduces to
//! word-wise AND plus a parity popcount.

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

/// A GF(2) vector packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = BitVec::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            debug_assert!(b <= 1);
            if b != 0 {
                v.set(i, true);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Parity of the AND with another vector's words: `<self, other>` over GF(2).
    #[inline]
    pub fn dot(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.len, other.len);
        let mut acc = 0u64;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= a & b;
        }
        acc.count_ones() % 2 == 1
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i) as u8).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Index of the lowest syndrome-style integer encoding: bit i of the
    /// returned value is entry i. Only valid for `len <= 64`.
    pub fn as_u64(&self) -> u64 {
        debug_assert!(self.len <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    pub fn from_u64(len: usize, value: u64) -> Self {
        debug_assert!(len <= 64);
        let mask = if len == 64 {
            u64::MAX
        } else {
            (1u64 << len) - 1
        };
        BitVec {
            len,
            words: vec![value & mask],
        }
    }
}

/// Row-major bit-packed GF(2) matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BitVec>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinaryMatrix {
            rows,
            cols,
            data: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BinaryMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols));
        BinaryMatrix {
            rows: rows.len(),
            cols,
            data: rows.iter().map(|r| BitVec::from_bits(r)).collect(),
        }
    }

    pub fn from_bitvec_rows(rows: Vec<BitVec>) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols));
        BinaryMatrix {
            rows: rows.len(),
            cols,
            data: rows,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r].get(c)
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.data[r].set(c, value);
    }

    pub fn row(&self, r: usize) -> &BitVec {
        &self.data[r]
    }

    pub fn row_support(&self, r: usize) -> Vec<usize> {
        (0..self.cols).filter(|&c| self.get(r, c)).collect()
    }

    pub fn column(&self, c: usize) -> BitVec {
        let mut v = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            if self.get(r, c) {
                v.set(r, true);
            }
        }
        v
    }

    pub fn transpose(&self) -> BinaryMatrix {
        let mut t = BinaryMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    t.set(c, r, true);
                }
            }
        }
        t
    }

    /// `self * other` over GF(2).
    pub fn matmul(&self, other: &BinaryMatrix) -> Result<BinaryMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = BinaryMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) {
                    let row = other.data[k].clone();
                    out.data[r].xor_assign(&row);
                }
            }
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|r| r.is_zero())
    }

    /// Left vector-matrix product `v * self` (v has one entry per row).
    pub fn left_mul(&self, v: &BitVec) -> Result<BitVec> {
        if v.len() != self.rows {
            return Err(Error::DimMismatch(format!(
                "left_mul vec {} by {}x{}",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = BitVec::zeros(self.cols);
        for r in 0..self.rows {
            if v.get(r) {
                out.xor_assign(&self.data[r]);
            }
        }
        Ok(out)
    }

    /// Matrix-vector product against the transpose: returns `self * v^T`,
    /// one parity bit per row. This is the syndrome map for `self = H`.
    pub fn mul_vec_t(&self, v: &BitVec) -> Result<BitVec> {
        if v.len() != self.cols {
            return Err(Error::DimMismatch(format!(
                "mul_vec_t vec {} by {}x{}",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            if self.data[r].dot(v) {
                out.set(r, true);
            }
        }
        Ok(out)
    }

    /// Reduced row-echelon form via Gaussian elimination over GF(2).
    /// Returns (rref, rank, pivot columns).
    pub fn rref(&self) -> (BinaryMatrix, usize, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut pivot_row = 0;
        for col in 0..m.cols {
            if pivot_row == m.rows {
                break;
            }
            let found = (pivot_row..m.rows).find(|&r| m.get(r, col));
            let Some(r) = found else { continue };
            m.data.swap(pivot_row, r);
            let pivot = m.data[pivot_row].clone();
            for r2 in 0..m.rows {
                if r2 != pivot_row && m.get(r2, col) {
                    m.data[r2].xor_assign(&pivot);
                }
            }
            pivots.push(col);
            pivot_row += 1;
        }
        (m, pivot_row, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1
    }

    /// Basis for the right null space: rows `h` with `self * h^T = 0`.
    /// Returns a matrix with `cols - rank` rows (caller checks emptiness).
    pub fn null_space(&self) -> BinaryMatrix {
        let (rref, rank, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut rows = Vec::with_capacity(free.len());
        for &f in &free {
            let mut h = BitVec::zeros(self.cols);
            h.set(f, true);
            for (j, &p) in pivots.iter().enumerate() {
                if rref.get(j, f) {
                    h.set(p, true);
                }
            }
            rows.push(h);
        }
        if rows.is_empty() {
            BinaryMatrix::zeros(0, self.cols)
        } else {
            let _ = rank;
            BinaryMatrix::from_bitvec_rows(rows)
        }
    }

    /// Permute columns: new column j is old column `perm[j]`.
    pub fn permute_cols(&self, perm: &[usize]) -> BinaryMatrix {
        assert_eq!(perm.len(), self.cols);
        let mut out = BinaryMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (j, &p) in perm.iter().enumerate() {
                if self.get(r, p) {
                    out.set(r, j, true);
                }
            }
        }
        out
    }
}
