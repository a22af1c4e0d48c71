//! Flooding sum-product belief propagation on the Tanner graph of H.

use crate::error::{Error, Result};
use crate::gf2::LinearCode;

/// Message magnitude clip, keeps atanh away from its poles.
const MSG_CLIP: f64 = 30.0;

#[inline]
fn clip(x: f64) -> f64 {
    x.clamp(-MSG_CLIP, MSG_CLIP)
}

/// Sum-product decoding; returns posterior LLRs (channel plus extrinsic)
/// after `iters` flooding iterations.
pub fn bp_sum_product(code: &LinearCode, gamma: &[f64], iters: usize) -> Result<Vec<f64>> {
    if gamma.len() != code.n {
        return Err(Error::DimMismatch(format!(
            "bp_sum_product: |gamma|={} but n={}",
            gamma.len(),
            code.n
        )));
    }
    if iters == 0 {
        return Err(Error::DimMismatch("bp_sum_product: iters >= 1".into()));
    }
    let supports = &code.row_supports;
    let num_checks = supports.len();
    // check -> variable messages, indexed [check][position within support]
    let mut c2v: Vec<Vec<f64>> = supports.iter().map(|s| vec![0.0; s.len()]).collect();

    let mut check_totals = vec![0.0f64; code.n];
    for _ in 0..iters {
        let prev = c2v.clone();
        for (ci, support) in supports.iter().enumerate() {
            // leave-one-out variable -> check inputs
            let tanhs: Vec<f64> = support
                .iter()
                .enumerate()
                .map(|(slot, &j)| {
                    let m = clip(gamma[j] + check_totals[j] - prev[ci][slot]);
                    (m / 2.0).tanh()
                })
                .collect();
            for (slot, out) in c2v[ci].iter_mut().enumerate().take(support.len()) {
                let mut prod = 1.0f64;
                for (slot2, &t) in tanhs.iter().enumerate() {
                    if slot2 != slot {
                        prod *= t;
                    }
                }
                *out = clip(2.0 * prod.atanh());
            }
        }
        let _ = num_checks;
        // refresh per-variable sums of incoming check messages
        check_totals.iter_mut().for_each(|t| *t = 0.0);
        for (ci, support) in supports.iter().enumerate() {
            for (slot, &j) in support.iter().enumerate() {
                check_totals[j] += c2v[ci][slot];
            }
        }
    }

    // posterior: channel plus all check messages
    Ok(gamma
        .iter()
        .zip(&check_totals)
        .map(|(g, t)| g + t)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RngStream;
    use crate::decoders::map::map_bitwise_enum;
    use crate::gf2::code::{repetition, spc};

    #[test]
    fn spc_one_iteration_hand_value() {
        let code = spc(3).unwrap();
        let out = bp_sum_product(&code, &[1.0, 1.0, 1.0], 1).unwrap();
        let expect = 1.0 + 2.0 * ((0.5f64).tanh().powi(2)).atanh();
        assert!((out[0] - expect).abs() < 1e-12, "{out:?} vs {expect}");
    }

    #[test]
    fn single_check_equals_map_after_one_iteration() {
        let code = spc(4).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..200 {
            let gamma: Vec<f64> = (0..4).map(|_| 3.0 * rng.gaussian()).collect();
            let bp = bp_sum_product(&code, &gamma, 1).unwrap();
            let map = map_bitwise_enum(&code, &gamma).unwrap();
            for (a, b) in bp.iter().zip(&map) {
                assert!((a - b).abs() < 1e-9, "{bp:?} vs {map:?}");
            }
        }
    }

    #[test]
    fn tree_h_converges_to_map() {
        // repetition(3)'s H is a two-check chain (cycle-free)
        let code = repetition(3).unwrap();
        let mut rng = RngStream::new(6, 0);
        for _ in 0..200 {
            let gamma: Vec<f64> = (0..3).map(|_| 2.0 * rng.gaussian()).collect();
            let bp = bp_sum_product(&code, &gamma, 10).unwrap();
            let map = map_bitwise_enum(&code, &gamma).unwrap();
            for (a, b) in bp.iter().zip(&map) {
                assert!((a - b).abs() < 1e-6, "{bp:?} vs {map:?}");
            }
        }
    }

    #[test]
    fn saturated_codeword_signs_fixed() {
        let code = spc(3).unwrap();
        // (0,1,1) is a codeword; saturated LLRs keep their signs
        let gamma = [1e12, -1e12, -1e12];
        let out = bp_sum_product(&code, &gamma, 5).unwrap();
        assert!(out[0] > 0.0 && out[1] < 0.0 && out[2] < 0.0);
        assert!(out.iter().all(|x| x.is_finite()));
    }
}
