//! Syndrome-table hard decoding, Chase-II test-pattern search, and Pyndiah
//! soft output from candidate metric differences.

use crate::error::{Error, Result};
use crate::gf2::{BitVec, CosetTable, LinearCode};

/// Hard decoding via the coset-leader table: flip the stored leader for the
/// observed syndrome. `None` when the syndrome is not covered.
pub fn hard_decode_syndrome_table(
    code: &LinearCode,
    table: &CosetTable,
    v: &BitVec,
) -> Result<Option<BitVec>> {
    let s = code.hard_syndrome(v)?;
    Ok(table.leader_bits(&s).map(|e| {
        let mut c = v.clone();
        c.xor_assign(&e);
        c
    }))
}

/// Chase-II outcome: candidate codewords with correlation metrics and the
/// best decision.
pub struct ChaseResult {
    /// Candidate codewords (as u64 masks) with metric M(c) = sum gamma_i (1-2c_i),
    /// in discovery order.
    pub candidates: Vec<(u64, f64)>,
    /// Index into `candidates` of the decision, when any candidate exists.
    pub decision: Option<usize>,
    pub n: usize,
}

impl ChaseResult {
    pub fn decision_bits(&self) -> Option<BitVec> {
        self.decision
            .map(|i| BitVec::from_u64(self.n, self.candidates[i].0))
    }
}

/// Chase-II: flip all subsets of the p least reliable positions on the hard
/// decision, decode each test pattern with the syndrome table, deduplicate,
/// and keep the candidate with maximal correlation (first found wins ties).
pub fn chase2(
    code: &LinearCode,
    gamma: &[f64],
    p: usize,
    table: &CosetTable,
) -> Result<ChaseResult> {
    if gamma.len() != code.n {
        return Err(Error::DimMismatch(format!(
            "chase2: |gamma|={} but n={}",
            gamma.len(),
            code.n
        )));
    }
    if p > 16 {
        return Err(Error::GuardViolation(format!("chase2: p={p} > 16")));
    }
    if code.n > 64 {
        return Err(Error::GuardViolation(format!("chase2: n={} > 64", code.n)));
    }
    let p = p.min(code.n);
    let hard: u64 = gamma
        .iter()
        .enumerate()
        .map(|(i, &g)| ((g < 0.0) as u64) << i)
        .sum();
    // p least-reliable positions
    let mut order: Vec<usize> = (0..code.n).collect();
    order.sort_by(|&a, &b| gamma[a].abs().partial_cmp(&gamma[b].abs()).unwrap());
    let weak: Vec<usize> = order[..p].to_vec();

    let metric = |c: u64| -> f64 {
        gamma
            .iter()
            .enumerate()
            .map(|(i, &g)| if (c >> i) & 1 == 0 { g } else { -g })
            .sum()
    };

    let mut candidates: Vec<(u64, f64)> = Vec::new();
    let mut best: Option<usize> = None;
    for mask in 0..(1u64 << p) {
        let mut v = hard;
        for (bit, &pos) in weak.iter().enumerate() {
            if (mask >> bit) & 1 == 1 {
                v ^= 1u64 << pos;
            }
        }
        let decoded = hard_decode_syndrome_table(code, table, &BitVec::from_u64(code.n, v))?;
        let Some(c) = decoded else { continue };
        let c = c.as_u64();
        if candidates.iter().any(|&(c2, _)| c2 == c) {
            continue;
        }
        let m = metric(c);
        candidates.push((c, m));
        match best {
            Some(b) if candidates[b].1 >= m => {}
            _ => best = Some(candidates.len() - 1),
        }
    }
    Ok(ChaseResult {
        candidates,
        decision: best,
        n: code.n,
    })
}

/// Pyndiah soft output: reliability from the metric gap to the best
/// competitor that disagrees in the bit, with the beta fallback when no
/// competitor exists.
pub fn pyndiah_soft(result: &ChaseResult, iter_idx: usize, beta_schedule: &[f64]) -> Vec<f64> {
    let decision_idx = result.decision.expect("pyndiah_soft requires a decision");
    let (d, m_d) = result.candidates[decision_idx];
    let beta = *beta_schedule
        .get(iter_idx)
        .or(beta_schedule.last())
        .unwrap_or(&1.0);
    (0..result.n)
        .map(|j| {
            let d_j = (d >> j) & 1;
            let sign = 1.0 - 2.0 * d_j as f64;
            let competitor = result
                .candidates
                .iter()
                .filter(|&&(c, _)| (c >> j) & 1 != d_j)
                .map(|&(_, m)| m)
                .fold(f64::NEG_INFINITY, f64::max);
            if competitor == f64::NEG_INFINITY {
                beta * sign
            } else {
                (m_d - competitor) / 2.0 * sign
            }
        })
        .collect()
}

/// Conventional Pyndiah reliability schedule per half-iteration.
pub const PYNDIAH_BETA: [f64; 6] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.0];
