//! GF(2^m) arithmetic via log/antilog tables, used for BCH generator
//! polynomial construction.

use crate::error::{Error, Result};

/// Fixed primitive polynomial per extension degree, coefficient bit i is x^i.
/// Standard tables (e.g. x^6 + x + 1 for m = 6).
pub fn primitive_poly(m: usize) -> Result<u32> {
    Ok(match m {
        2 => 0b111,
        3 => 0b1011,
        4 => 0b10011,
        5 => 0b100101,
        6 => 0b1000011,
        7 => 0b10001001,
        8 => 0b100011101,
        9 => 0b1000010001,
        10 => 0b10000001001,
        _ => {
            return Err(Error::UnsupportedCode(format!(
                "no primitive polynomial table entry for m={m}"
            )))
        }
    })
}

/// GF(2^m) with exp/log tables over a fixed primitive polynomial.
pub struct Gf2m {
    pub m: usize,
    pub poly: u32,
    exp: Vec<u32>, // exp[i] = alpha^i, length 2*(2^m - 1)
    log: Vec<u32>, // log[x] for x in 1..2^m
}

impl Gf2m {
    pub fn new(m: usize) -> Result<Self> {
        let poly = primitive_poly(m)?;
        let n = (1usize << m) - 1;
        let mut exp = vec![0u32; 2 * n];
        let mut log = vec![0u32; 1 << m];
        let mut x = 1u32;
        for i in 0..n {
            exp[i] = x;
            exp[i + n] = x;
            log[x as usize] = i as u32;
            x <<= 1;
            if x & (1 << m) != 0 {
                x ^= poly;
            }
        }
        Ok(Gf2m { m, poly, exp, log })
    }

    pub fn order(&self) -> usize {
        (1usize << self.m) - 1
    }

    pub fn alpha_pow(&self, e: usize) -> u32 {
        self.exp[e % self.order()]
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    /// Cyclotomic coset of s modulo 2^m - 1.
    pub fn cyclotomic_coset(&self, s: usize) -> Vec<usize> {
        let n = self.order();
        let mut coset = vec![s % n];
        let mut x = (s * 2) % n;
        while x != s % n {
            coset.push(x);
            x = (x * 2) % n;
        }
        coset
    }

    /// Minimal polynomial of alpha^s over GF(2), as coefficient bits
    /// (index = degree). Product of (x - alpha^j) over the cyclotomic coset.
    pub fn minimal_poly(&self, s: usize) -> Vec<u8> {
        let coset = self.cyclotomic_coset(s);
        // polynomial over GF(2^m), index = degree
        let mut poly: Vec<u32> = vec![1];
        for &j in &coset {
            let root = self.alpha_pow(j);
            let mut next = vec![0u32; poly.len() + 1];
            for (d, &c) in poly.iter().enumerate() {
                next[d + 1] ^= c;
                next[d] ^= self.mul(c, root);
            }
            poly = next;
        }
        poly.iter()
            .map(|&c| {
                debug_assert!(c <= 1, "minimal polynomial must have GF(2) coefficients");
                c as u8
            })
            .collect()
    }
}

/// Polynomial multiplication over GF(2), coefficient bit vectors (index = degree).
pub fn poly_mul(a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0 {
            for (j, &bj) in b.iter().enumerate() {
                out[i + j] ^= bj;
            }
        }
    }
    out
}

/// Polynomial remainder a mod b over GF(2).
pub fn poly_rem(a: &[u8], b: &[u8]) -> Vec<u8> {
    let db = b.iter().rposition(|&c| c != 0).expect("nonzero divisor");
    let mut r = a.to_vec();
    while let Some(dr) = r.iter().rposition(|&c| c != 0) {
        if dr < db {
            break;
        }
        let shift = dr - db;
        for (i, &c) in b.iter().enumerate() {
            r[i + shift] ^= c;
        }
    }
    r.truncate(db.max(1));
    r
}

/// LCM of a set of GF(2) polynomials (product of distinct factors).
pub fn poly_lcm(polys: &[Vec<u8>]) -> Vec<u8> {
    let mut acc = vec![1u8];
    for p in polys {
        // divide acc's gcd with p out of p, then multiply; with minimal
        // polynomials the factors are either identical or coprime, so it
        // suffices to skip duplicates.
        if poly_rem(&acc, p).iter().all(|&c| c == 0) {
            continue;
        }
        acc = poly_mul(&acc, p);
    }
    acc
}
