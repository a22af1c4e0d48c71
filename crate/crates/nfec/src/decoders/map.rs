//! Exact bitwise MAP decoding, two routes: codebook enumeration and the
//! forward-backward sweep over the 2^(n-k)-state syndrome trellis.
//!
//! Both compute gamma*_i = log sum_{c: c_i=0} exp[(1-c) gamma^T]
//!                        - log sum_{c: c_i=1} exp[(1-c) gamma^T],
//! the a-posteriori LLR under a uniform codeword prior.

use crate::error::{Error, Result};
use crate::gf2::LinearCode;

const ENUM_GUARD_K: usize = 24;
const TRELLIS_GUARD_R: usize = 20;

/// Streaming log-sum-exp accumulator.
#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    fn add(&mut self, w: f64) {
        if w > self.max {
            self.sum = self.sum * (self.max - w).exp() + 1.0;
            self.max = w;
        } else {
            self.sum += (w - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

#[inline]
fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Exact bitwise MAP by enumerating all 2^k codewords in Gray order over the
/// information bits, updating the codeword and its correlation incrementally.
pub fn map_bitwise_enum(code: &LinearCode, gamma: &[f64]) -> Result<Vec<f64>> {
    if gamma.len() != code.n {
        return Err(Error::DimMismatch(format!(
            "map_bitwise_enum: |gamma|={} but n={}",
            gamma.len(),
            code.n
        )));
    }
    if code.k > ENUM_GUARD_K {
        return Err(Error::GuardViolation(format!(
            "map_bitwise_enum: 2^{} codewords exceeds guard 2^{ENUM_GUARD_K}",
            code.k
        )));
    }
    if code.n > 64 {
        return Err(Error::GuardViolation(format!(
            "map_bitwise_enum: n={} > 64",
            code.n
        )));
    }
    let n = code.n;
    let g_rows: Vec<u64> = (0..code.k).map(|i| code.g.row(i).as_u64()).collect();
    let g_supports: Vec<Vec<usize>> = (0..code.k).map(|i| code.g.row_support(i)).collect();

    // exp[(1-c) gamma^T] = exp(sum gamma) * exp(-corr(c)), the common factor
    // cancels in the ratio; track w(c) = -corr(c).
    let mut acc0 = vec![LogSum::new(); n];
    let mut acc1 = vec![LogSum::new(); n];
    let mut c = 0u64;
    let mut corr = 0.0f64;
    let total = 1u64 << code.k;
    for step in 0..total {
        if step > 0 {
            let bit = step.trailing_zeros() as usize;
            for &j in &g_supports[bit] {
                // position j toggles; correlation gains gamma_j when entering 1
                if (c >> j) & 1 == 0 {
                    corr += gamma[j];
                } else {
                    corr -= gamma[j];
                }
            }
            c ^= g_rows[bit];
        }
        let w = -corr;
        for (i, (a0, a1)) in acc0.iter_mut().zip(acc1.iter_mut()).enumerate() {
            if (c >> i) & 1 == 0 {
                a0.add(w);
            } else {
                a1.add(w);
            }
        }
    }
    Ok((0..n).map(|i| acc0[i].value() - acc1[i].value()).collect())
}

/// Exact bitwise MAP via the syndrome trellis: states are partial syndromes,
/// stage transitions XOR in H's column when the bit is 1, and the final state
/// is constrained to zero. Backward metrics are checkpointed every
/// ceil(sqrt(n)) stages and recomputed per segment, so memory stays at
/// O(sqrt(n) * 2^(n-k)) rather than O(n * 2^(n-k)).
pub fn map_bitwise_trellis(code: &LinearCode, gamma: &[f64]) -> Result<Vec<f64>> {
    if gamma.len() != code.n {
        return Err(Error::DimMismatch(format!(
            "map_bitwise_trellis: |gamma|={} but n={}",
            gamma.len(),
            code.n
        )));
    }
    let r = code.n - code.k;
    if r > TRELLIS_GUARD_R {
        return Err(Error::GuardViolation(format!(
            "map_bitwise_trellis: 2^{r} states exceeds guard 2^{TRELLIS_GUARD_R}"
        )));
    }
    let n = code.n;
    let num_states = 1usize << r;
    let h_cols: Vec<usize> = (0..n).map(|j| code.h.column(j).as_u64() as usize).collect();

    let seg = (n as f64).sqrt().ceil() as usize;
    // backward pass: beta at stage n .. 1, checkpoint stages n and multiples of seg
    let mut beta = vec![f64::NEG_INFINITY; num_states];
    beta[0] = 0.0;
    let mut checkpoints: Vec<(usize, Vec<f64>)> = vec![(n, beta.clone())];
    for stage in (1..n).rev() {
        beta = beta_step(&beta, gamma[stage], h_cols[stage], num_states);
        if stage % seg == 0 {
            checkpoints.push((stage, beta.clone()));
        }
    }

    // forward pass with per-segment beta recomputation
    let mut alpha = vec![f64::NEG_INFINITY; num_states];
    alpha[0] = 0.0;
    let mut llr = vec![0.0f64; n];
    let mut seg_betas: Vec<Vec<f64>> = Vec::new(); // betas for stages (a, b], front = a+1
    let mut seg_range = (0usize, 0usize);
    for i in 0..n {
        let need = i + 1; // beta at stage i+1
        if need <= seg_range.0 || need > seg_range.1 {
            // recompute betas for stages need..=ckpt from the nearest checkpoint
            let (ckpt_stage, ckpt) = checkpoints
                .iter()
                .filter(|(s, _)| *s >= need)
                .min_by_key(|(s, _)| *s)
                .expect("checkpoint covers every stage");
            let mut stack: Vec<Vec<f64>> = vec![ckpt.clone()];
            for stage in (need..*ckpt_stage).rev() {
                let b = beta_step(
                    stack.last().unwrap(),
                    gamma[stage],
                    h_cols[stage],
                    num_states,
                );
                stack.push(b);
            }
            stack.reverse(); // front = beta at `need`, back = beta at checkpoint
            seg_betas = stack;
            seg_range = (need - 1, *ckpt_stage);
        }
        let beta_next = &seg_betas[need - 1 - seg_range.0];

        let mut num = LogSum::new();
        let mut den = LogSum::new();
        let h = h_cols[i];
        for s in 0..num_states {
            let a = alpha[s];
            if a == f64::NEG_INFINITY {
                continue;
            }
            let b0 = beta_next[s];
            if b0 != f64::NEG_INFINITY {
                num.add(a + gamma[i] + b0);
            }
            let b1 = beta_next[s ^ h];
            if b1 != f64::NEG_INFINITY {
                den.add(a + b1);
            }
        }
        llr[i] = num.value() - den.value();

        // advance alpha to stage i+1
        let mut next = vec![f64::NEG_INFINITY; num_states];
        for s in 0..num_states {
            let a = alpha[s];
            if a == f64::NEG_INFINITY {
                continue;
            }
            next[s] = logsumexp2(next[s], a + gamma[i]);
            let s1 = s ^ h;
            next[s1] = logsumexp2(next[s1], a);
        }
        alpha = next;
    }
    Ok(llr)
}

fn beta_step(beta_next: &[f64], gamma_i: f64, h_col: usize, num_states: usize) -> Vec<f64> {
    let mut beta = vec![f64::NEG_INFINITY; num_states];
    for (s, b) in beta.iter_mut().enumerate() {
        *b = logsumexp2(beta_next[s] + gamma_i, beta_next[s ^ h_col]);
    }
    beta
}
