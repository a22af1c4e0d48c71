//! Coset-leader table: syndrome -> minimum-weight error pattern, built by
//! breadth-first enumeration over error weights.

use super::code::LinearCode;
use super::matrix::BitVec;
use crate::error::{Error, Result};

/// Syndrome-indexed table of minimum-weight coset leaders up to weight `t_max`.
/// Error patterns are stored as u64 bit masks, so `n <= 64`.
pub struct CosetTable {
    pub t_max: usize,
    pub n: usize,
    pub r: usize,
    /// leaders[s] = Some(pattern) when the coset of syndrome s has a leader
    /// of weight <= t_max.
    leaders: Vec<Option<u64>>,
    pub covered: usize,
}

impl CosetTable {
    pub fn leader(&self, syndrome: u64) -> Option<u64> {
        self.leaders[syndrome as usize]
    }

    pub fn leader_bits(&self, syndrome: &BitVec) -> Option<BitVec> {
        self.leader(syndrome.as_u64())
            .map(|p| BitVec::from_u64(self.n, p))
    }
}

/// Advance a lexicographic w-combination of 0..n. Returns false past the last.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let w = idx.len();
    let mut i = w;
    while i > 0 {
        i -= 1;
        if idx[i] != i + n - w {
            idx[i] += 1;
            for j in i + 1..w {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Build the table by enumerating error patterns of weight 0..t_max in order;
/// the first pattern to reach a syndrome is its (minimum-weight) leader.
pub fn coset_leader_table(code: &LinearCode, t_max: usize) -> Result<CosetTable> {
    let r = code.n - code.k;
    if r > 24 {
        return Err(Error::GuardViolation(format!(
            "coset table needs 2^{r} entries (guard: n-k <= 24)"
        )));
    }
    if code.n > 64 {
        return Err(Error::GuardViolation(format!(
            "coset table stores patterns as u64 (n={} > 64)",
            code.n
        )));
    }
    // syndrome of a unit error at position j = column j of H, as an integer
    let col_syndromes: Vec<u64> = (0..code.n).map(|j| code.h.column(j).as_u64()).collect();

    let mut leaders: Vec<Option<u64>> = vec![None; 1usize << r];
    leaders[0] = Some(0);
    let mut covered = 1usize;

    // iterate weight-w subsets of positions in lexicographic order
    for w in 1..=t_max.min(code.n) {
        let mut idx: Vec<usize> = (0..w).collect();
        loop {
            let mut syn = 0u64;
            let mut pat = 0u64;
            for &j in &idx {
                syn ^= col_syndromes[j];
                pat |= 1u64 << j;
            }
            let slot = &mut leaders[syn as usize];
            if slot.is_none() {
                *slot = Some(pat);
                covered += 1;
            }
            if !next_combination(&mut idx, code.n) {
                break;
            }
        }
    }

    Ok(CosetTable {
        t_max,
        n: code.n,
        r,
        leaders,
        covered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::code::{bch, hamming};

    #[test]
    fn zero_syndrome_zero_leader() {
        let code = hamming(3).unwrap();
        let table = coset_leader_table(&code, 1).unwrap();
        assert_eq!(table.leader(0), Some(0));
    }

    #[test]
    fn hamming_7_4_all_syndromes_weight_le_1() {
        let code = hamming(3).unwrap();
        let table = coset_leader_table(&code, 1).unwrap();
        assert_eq!(table.covered, 8);
        for s in 0..8u64 {
            let leader = table.leader(s).unwrap();
            assert!(leader.count_ones() <= 1);
            // leader's syndrome is its key
            let e = BitVec::from_u64(7, leader);
            assert_eq!(code.hard_syndrome(&e).unwrap().as_u64(), s);
        }
    }

    #[test]
    fn leaders_are_minimum_weight_exhaustive() {
        // n <= 15: check no lighter pattern shares a syndrome
        let code = bch(4, 2).unwrap();
        let table = coset_leader_table(&code, 3).unwrap();
        let mut best = vec![u32::MAX; 1 << (code.n - code.k)];
        for v in 0..(1u64 << code.n) {
            let s = code
                .hard_syndrome(&BitVec::from_u64(code.n, v))
                .unwrap()
                .as_u64() as usize;
            best[s] = best[s].min(v.count_ones());
        }
        for (s, &weight) in best.iter().enumerate() {
            if let Some(leader) = table.leader(s as u64) {
                assert_eq!(leader.count_ones(), weight, "syndrome {s}");
            } else {
                assert!(weight > table.t_max as u32, "syndrome {s} missed");
            }
        }
    }

    #[test]
    fn guard_violation() {
        // extended BCH(128,virtual) style guard: simulate with n-k too large
        let code = bch(5, 3).unwrap(); // n-k = 15, fine
        assert!(coset_leader_table(&code, 1).is_ok());
    }
}
