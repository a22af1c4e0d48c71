//! Monte-Carlo BER/FER simulation with Wilson confidence intervals,
//! soft-output distribution statistics, and histogram export.
//!
//! Frames are generated in fixed-size blocks, each with its own RNG stream,
//! and blocks are aggregated in index order — results are identical for any
//! worker count.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;

use crate::channel::{esn0_db_to_sigma2, RngStream};
use crate::decoders::{
    bp_sum_product, chase2, hard_decode_syndrome_table, pyndiah_soft, PYNDIAH_BETA,
};
use crate::error::{Error, Result};
use crate::gf2::{BitVec, CosetTable, LinearCode};
use crate::nn::DecoderModel;
use crate::tpc::{tpc_decode, SoftDecoder, TpcCode};
use crate::train::map_reference;

/// Soft-in decoder for one frame; `None` marks a decode failure (counted as a
/// frame error with every information bit wrong).
pub trait FrameDecoder: Sync {
    fn decode(&self, gamma: &[f64]) -> Result<Option<Vec<f64>>>;
    fn label(&self) -> &str;
}

pub struct MapFrameDecoder(pub Arc<LinearCode>);

impl FrameDecoder for MapFrameDecoder {
    fn decode(&self, gamma: &[f64]) -> Result<Option<Vec<f64>>> {
        map_reference(&self.0, gamma).map(Some)
    }
    fn label(&self) -> &str {
        "map"
    }
}

pub struct BpFrameDecoder {
    pub code: Arc<LinearCode>,
    pub iters: usize,
}

impl FrameDecoder for BpFrameDecoder {
    fn decode(&self, gamma: &[f64]) -> Result<Option<Vec<f64>>> {
        bp_sum_product(&self.code, gamma, self.iters).map(Some)
    }
    fn label(&self) -> &str {
        "bp"
    }
}

pub struct SyndromeTableFrameDecoder {
    pub code: Arc<LinearCode>,
    pub table: CosetTable,
}

impl FrameDecoder for SyndromeTableFrameDecoder {
    fn decode(&self, gamma: &[f64]) -> Result<Option<Vec<f64>>> {
        let hard: Vec<u8> = gamma.iter().map(|&g| (g < 0.0) as u8).collect();
        let decoded =
            hard_decode_syndrome_table(&self.code, &self.table, &BitVec::from_bits(&hard))?;
        Ok(decoded.map(|c| c.to_bits().iter().map(|&b| 1.0 - 2.0 * b as f64).collect()))
    }
    fn label(&self) -> &str {
        "syndrome_table"
    }
}

pub struct ChaseFrameDecoder {
    pub code: Arc<LinearCode>,
    pub table: CosetTable,
    pub p: usize,
}

impl FrameDecoder for ChaseFrameDecoder {
    fn decode(&self, gamma: &[f64]) -> Result<Option<Vec<f64>>> {
        let res = chase2(&self.code, gamma, self.p, &self.table)?;
        if res.decision.is_none() {
            return Ok(None);
        }
        Ok(Some(pyndiah_soft(&res, 0, &PYNDIAH_BETA)))
    }
    fn label(&self) -> &str {
        "chase_pyndiah"
    }
}

pub struct NeuralFrameDecoder(pub Arc<DecoderModel>);

impl FrameDecoder for NeuralFrameDecoder {
    fn decode(&self, gamma: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(Some(self.0.decode_llr(gamma)))
    }
    fn label(&self) -> &str {
        "neural"
    }
}

/// Stop rule and budget for one SNR point.
#[derive(Debug, Clone)]
pub struct StopRule {
    pub max_frames: u64,
    pub target_frame_errors: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_frames: 1_000_000,
            target_frame_errors: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimPoint {
    pub esn0_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub fer: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub wall_secs: f64,
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_ci(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

const BLOCK_FRAMES: u64 = 256;
const WAVE_BLOCKS: u64 = 16;

fn block_counts(
    code: &LinearCode,
    decoder: &dyn FrameDecoder,
    sigma2: f64,
    frames: u64,
    seed: u64,
    stream: u64,
) -> Result<(u64, u64)> {
    let mut rng = RngStream::new(seed, stream);
    let sigma = sigma2.sqrt();
    let k = code.k;
    let mut bit_errors = 0;
    let mut frame_errors = 0;
    for _ in 0..frames {
        let u_bits: Vec<u8> = (0..k).map(|_| (rng.uniform() < 0.5) as u8).collect();
        let cw = code.encode(&BitVec::from_bits(&u_bits))?;
        let cw_bits = cw.to_bits();
        let gamma: Vec<f64> = cw_bits
            .iter()
            .map(|&b| {
                let x = 1.0 - 2.0 * b as f64;
                2.0 * (x + sigma * rng.gaussian()) / sigma2
            })
            .collect();
        match decoder.decode(&gamma)? {
            Some(llr) => {
                let mut wrong = 0;
                for &pos in &code.info_set {
                    if ((llr[pos] < 0.0) as u8) != cw_bits[pos] {
                        wrong += 1;
                    }
                }
                bit_errors += wrong;
                if wrong > 0 {
                    frame_errors += 1;
                }
            }
            None => {
                // failure convention: frame error, all information bits wrong
                bit_errors += k as u64;
                frame_errors += 1;
            }
        }
    }
    Ok((bit_errors, frame_errors))
}

/// Monte-Carlo BER/FER at each SNR point. Deterministic for a given seed and
/// independent of the rayon worker count.
pub fn simulate(
    code: &Arc<LinearCode>,
    decoder: &dyn FrameDecoder,
    esn0_db: &[f64],
    stop: &StopRule,
    seed: u64,
) -> Result<Vec<SimPoint>> {
    let mut points = Vec::with_capacity(esn0_db.len());
    for (pi, &esn0) in esn0_db.iter().enumerate() {
        let t0 = std::time::Instant::now();
        let sigma2 = esn0_db_to_sigma2(esn0);
        let mut frames = 0u64;
        let mut bit_errors = 0u64;
        let mut frame_errors = 0u64;
        let mut block = 0u64;
        'point: loop {
            // one wave of independent blocks, aggregated in index order
            let wave: Vec<Result<(u64, u64, u64)>> = (0..WAVE_BLOCKS)
                .into_par_iter()
                .map(|w| {
                    let b = block + w;
                    let budget = stop.max_frames.saturating_sub(b * BLOCK_FRAMES);
                    let n = budget.min(BLOCK_FRAMES);
                    if n == 0 {
                        return Ok((0, 0, 0));
                    }
                    let stream = ((pi as u64 + 1) << 32) | b;
                    let (be, fe) = block_counts(code, decoder, sigma2, n, seed, stream)?;
                    Ok((n, be, fe))
                })
                .collect();
            for res in wave {
                let (n, be, fe) = res?;
                frames += n;
                bit_errors += be;
                frame_errors += fe;
                block += 1;
                if frames >= stop.max_frames || frame_errors >= stop.target_frame_errors {
                    break 'point;
                }
            }
        }
        let (ci_low, ci_high) = wilson_ci(frame_errors, frames);
        points.push(SimPoint {
            esn0_db: esn0,
            frames,
            bit_errors,
            frame_errors,
            ber: bit_errors as f64 / (frames * code.k as u64) as f64,
            fer: frame_errors as f64 / frames as f64,
            ci_low,
            ci_high,
            wall_secs: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(points)
}

/// Raw BPSK over AWGN without coding: fraction of sign flips.
pub fn uncoded_ber(esn0_db: f64, bits: u64, seed: u64) -> f64 {
    let sigma2 = esn0_db_to_sigma2(esn0_db);
    let sigma = sigma2.sqrt();
    let mut rng = RngStream::new(seed, 0);
    let mut errors = 0u64;
    for _ in 0..bits {
        if 1.0 + sigma * rng.gaussian() < 0.0 {
            errors += 1;
        }
    }
    errors as f64 / bits as f64
}

/// Gaussian tail probability Q(x) via the Abramowitz-Stegun erf polynomial.
pub fn q_func(x: f64) -> f64 {
    0.5 * erfc_as(x / std::f64::consts::SQRT_2)
}

fn erfc_as(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_as(-x);
    }
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736
                + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    poly * (-x * x).exp()
}

// ---------------------------------------------------------------------------
// TPC simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TpcSimPoint {
    pub esn0_db: f64,
    pub frames: u64,
    pub frame_errors: u64,
    pub fer: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// FER of the hard decision after each half-iteration output.
    pub fer_per_half_iter: Vec<f64>,
    pub wall_secs: f64,
}

struct TpcBlockCounts {
    frame_errors: u64,
    errors_per_half_iter: Vec<u64>,
}

#[allow(clippy::too_many_arguments)]
fn tpc_block(
    tpc: &TpcCode,
    d_c: &dyn SoftDecoder,
    d_r: &dyn SoftDecoder,
    alpha_c: &[f64],
    alpha_r: &[f64],
    n_iters: usize,
    sigma2: f64,
    frames: u64,
    seed: u64,
    stream: u64,
) -> Result<TpcBlockCounts> {
    let mut rng = RngStream::new(seed, stream);
    let sigma = sigma2.sqrt();
    let (k1, k2) = (tpc.col_code.k, tpc.row_code.k);
    let mut frame_errors = 0u64;
    let mut per_iter = vec![0u64; 2 * n_iters];
    for _ in 0..frames {
        let u = Array2::from_shape_fn((k1, k2), |_| (rng.uniform() < 0.5) as u8);
        let c = tpc.encode(&u)?;
        let gamma = c.mapv(|b| {
            let x = 1.0 - 2.0 * b as f64;
            2.0 * (x + sigma * rng.gaussian()) / sigma2
        });
        let res = tpc_decode(&gamma, tpc, d_c, d_r, alpha_c, alpha_r, n_iters)?;
        // systematic components: the information block is the top-left corner
        let info_wrong = |llrs: &Array2<f64>| {
            (0..k1).any(|i| (0..k2).any(|j| ((llrs[[i, j]] < 0.0) as u8) != c[[i, j]]))
        };
        // decisions come from the final decoder posterior; the damped state
        // is the inter-iteration message, not a decision statistic
        let final_llrs = res.iter_outputs.last().unwrap_or(&res.gamma_hat);
        if res.failed || info_wrong(final_llrs) {
            frame_errors += 1;
        }
        for (slot, out) in per_iter.iter_mut().zip(&res.iter_outputs) {
            if info_wrong(out) {
                *slot += 1;
            }
        }
    }
    Ok(TpcBlockCounts {
        frame_errors,
        errors_per_half_iter: per_iter,
    })
}

/// Monte-Carlo TPC FER; same block/wave scheme as `simulate`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_tpc(
    tpc: &TpcCode,
    d_c: &dyn SoftDecoder,
    d_r: &dyn SoftDecoder,
    alpha_c: &[f64],
    alpha_r: &[f64],
    n_iters: usize,
    esn0_db: &[f64],
    stop: &StopRule,
    seed: u64,
) -> Result<Vec<TpcSimPoint>> {
    let mut points = Vec::with_capacity(esn0_db.len());
    const TPC_BLOCK: u64 = 32;
    for (pi, &esn0) in esn0_db.iter().enumerate() {
        let t0 = std::time::Instant::now();
        let sigma2 = esn0_db_to_sigma2(esn0);
        let mut frames = 0u64;
        let mut frame_errors = 0u64;
        let mut per_iter = vec![0u64; 2 * n_iters];
        let mut block = 0u64;
        'point: loop {
            let wave: Vec<Result<(u64, TpcBlockCounts)>> = (0..WAVE_BLOCKS)
                .into_par_iter()
                .map(|w| {
                    let b = block + w;
                    let budget = stop.max_frames.saturating_sub(b * TPC_BLOCK);
                    let n = budget.min(TPC_BLOCK);
                    if n == 0 {
                        return Ok((
                            0,
                            TpcBlockCounts {
                                frame_errors: 0,
                                errors_per_half_iter: vec![0; 2 * n_iters],
                            },
                        ));
                    }
                    let stream = ((pi as u64 + 1) << 32) | b;
                    let counts = tpc_block(
                        tpc, d_c, d_r, alpha_c, alpha_r, n_iters, sigma2, n, seed, stream,
                    )?;
                    Ok((n, counts))
                })
                .collect();
            for res in wave {
                let (n, counts) = res?;
                frames += n;
                frame_errors += counts.frame_errors;
                for (acc, e) in per_iter.iter_mut().zip(&counts.errors_per_half_iter) {
                    *acc += e;
                }
                block += 1;
                if frames >= stop.max_frames || frame_errors >= stop.target_frame_errors {
                    break 'point;
                }
            }
        }
        let (ci_low, ci_high) = wilson_ci(frame_errors, frames);
        points.push(TpcSimPoint {
            esn0_db: esn0,
            frames,
            frame_errors,
            fer: frame_errors as f64 / frames as f64,
            ci_low,
            ci_high,
            fer_per_half_iter: per_iter.iter().map(|&e| e as f64 / frames as f64).collect(),
            wall_secs: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// soft-output statistics and histograms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SoftStatsRow {
    pub basis: String,
    pub mean: f64,
    pub var: f64,
    pub kl: f64,
    pub mse: f64,
}

fn kl_divergence(star: &Array2<f64>, hat: &Array2<f64>) -> f64 {
    let clamp = crate::nn::KL_CLAMP;
    let frames = star.ncols() as f64;
    star.iter()
        .zip(hat.iter())
        .map(|(&s, &h)| {
            let a = s.abs().max(clamp);
            let b = h.abs().max(clamp);
            a * (a / b).ln()
        })
        .sum::<f64>()
        / frames
}

/// Distribution statistics of decoder output versus the MAP reference, per
/// basis: the output, the reference, and their difference. KL and MSE are
/// reported on the output row.
pub fn soft_stats(hat: &Array2<f64>, star: &Array2<f64>) -> Vec<SoftStatsRow> {
    assert_eq!(hat.dim(), star.dim());
    let diff = hat - star;
    let mse = diff.mapv(|x| x * x).mean().unwrap();
    let kl = kl_divergence(star, hat);
    let row = |basis: &str, m: &Array2<f64>, kl: f64, mse: f64| {
        let (mean, var) = crate::nn::moments(m);
        SoftStatsRow {
            basis: basis.to_string(),
            mean,
            var,
            kl,
            mse,
        }
    };
    vec![
        row("gamma_hat", hat, kl, mse),
        row("gamma_star", star, 0.0, 0.0),
        row("difference", &diff, 0.0, 0.0),
    ]
}

/// Fixed-width histogram; out-of-range samples are clamped into the edge
/// bins so counts always sum to the sample count.
pub fn histogram(samples: &[f64], bins: usize, range: (f64, f64)) -> Result<(Vec<f64>, Vec<u64>)> {
    if bins == 0 {
        return Err(Error::Config("histogram: bins must be >= 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::Config("histogram: empty input".into()));
    }
    let (lo, hi) = range;
    if hi <= lo || hi.is_nan() || lo.is_nan() {
        return Err(Error::Config(
            "histogram: range high must exceed low".into(),
        ));
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let idx = (((x - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    Ok((edges, counts))
}

// ---------------------------------------------------------------------------
// CSV / SVG emitters
// ---------------------------------------------------------------------------

pub fn sim_csv(points: &[SimPoint]) -> String {
    let mut s = String::from("esn0_db,frames,bit_errors,frame_errors,ber,fer,ci_low,ci_high\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            p.esn0_db, p.frames, p.bit_errors, p.frame_errors, p.ber, p.fer, p.ci_low, p.ci_high
        ));
    }
    s
}

pub fn tpc_sim_csv(points: &[TpcSimPoint]) -> String {
    let half_iters = points.first().map_or(0, |p| p.fer_per_half_iter.len());
    let mut s = String::from("esn0_db,frames,frame_errors,fer,ci_low,ci_high");
    for j in 0..half_iters {
        s.push_str(&format!(",fer_half_iter_{j}"));
    }
    s.push('\n');
    for p in points {
        s.push_str(&format!(
            "{},{},{},{:.8e},{:.8e},{:.8e}",
            p.esn0_db, p.frames, p.frame_errors, p.fer, p.ci_low, p.ci_high
        ));
        for f in &p.fer_per_half_iter {
            s.push_str(&format!(",{f:.8e}"));
        }
        s.push('\n');
    }
    s
}

pub fn hist_csv(edges: &[f64], counts: &[u64]) -> String {
    let mut s = String::from("left,right,count\n");
    for (i, &c) in counts.iter().enumerate() {
        s.push_str(&format!("{:.8e},{:.8e},{c}\n", edges[i], edges[i + 1]));
    }
    s
}

pub fn soft_stats_csv(rows: &[SoftStatsRow]) -> String {
    let mut s = String::from("basis,mean,var,kl,mse\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            r.basis, r.mean, r.var, r.kl, r.mse
        ));
    }
    s
}

/// Minimal log-y line plot of (x, y) series; convenience companion to the
/// CSV output.
pub fn svg_curves(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, ml, mb) = (640.0, 420.0, 60.0, 40.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|&(_, y)| y > 0.0)
        .collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, -1.0, 0.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - 20.0);
    let sy = |y: f64| h - mb - (y.log10() - y0) / (y1 - y0) * (h - mb - 30.0);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    );
    for (si, (label, pts)) in series.iter().enumerate() {
        let color = palette[si % palette.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|&&(_, y)| y > 0.0)
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{label}</text>\n",
            path.join(" "),
            w - 150.0,
            40.0 + 15.0 * si as f64
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"30\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n</svg>\n",
        h - mb,
        w - 20.0,
        h - mb,
        h - mb
    ));
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::code::hamming;
    use crate::gf2::coset_leader_table;

    #[test]
    fn wilson_basic_properties() {
        let (lo, hi) = wilson_ci(10, 100);
        assert!(lo < 0.1 && 0.1 < hi);
        assert!(lo > 0.0 && hi < 1.0);
        let (lo, hi) = wilson_ci(0, 50);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    #[test]
    fn wilson_coverage_at_p01() {
        let p = 0.1;
        let mut rng = RngStream::new(42, 0);
        let mut covered = 0;
        let reps = 1000;
        for _ in 0..reps {
            let successes = (0..200).filter(|_| rng.uniform() < p).count() as u64;
            let (lo, hi) = wilson_ci(successes, 200);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        assert!(covered >= 930, "coverage {covered}/1000");
    }

    #[test]
    fn noiseless_channel_error_free() {
        let code = Arc::new(hamming(3).unwrap());
        let dec = MapFrameDecoder(code.clone());
        let stop = StopRule {
            max_frames: 2000,
            target_frame_errors: 100,
        };
        let pts = simulate(&code, &dec, &[40.0], &stop, 3).unwrap();
        assert_eq!(pts[0].bit_errors, 0);
        assert_eq!(pts[0].frame_errors, 0);
        assert_eq!(pts[0].frames, 2000);
    }

    #[test]
    fn uncoded_bpsk_matches_q_function() {
        let ber = uncoded_ber(0.0, 2_000_000, 5);
        let expect = q_func(std::f64::consts::SQRT_2);
        assert!((expect - 0.0786).abs() < 3e-4, "oracle value {expect}");
        assert!((ber - expect).abs() < 1e-3, "ber {ber}, expect {expect}");
    }

    #[test]
    fn decoder_ordering_on_hamming() {
        let code = Arc::new(hamming(3).unwrap());
        let map = MapFrameDecoder(code.clone());
        let bp = BpFrameDecoder {
            code: code.clone(),
            iters: 50,
        };
        let table = SyndromeTableFrameDecoder {
            code: code.clone(),
            table: coset_leader_table(&code, 1).unwrap(),
        };
        let stop = StopRule {
            max_frames: 20_000,
            target_frame_errors: u64::MAX,
        };
        // common random numbers: same seed/stream layout for all decoders
        let ber = |d: &dyn FrameDecoder| simulate(&code, d, &[2.0], &stop, 11).unwrap()[0].ber;
        let (b_map, b_bp, b_tab) = (ber(&map), ber(&bp), ber(&table));
        assert!(b_map <= b_bp + 1e-12, "map {b_map} vs bp {b_bp}");
        assert!(b_bp <= b_tab + 5e-4, "bp {b_bp} vs table {b_tab}");
    }

    #[test]
    fn simulate_worker_count_invariant() {
        let code = Arc::new(hamming(3).unwrap());
        let dec = MapFrameDecoder(code.clone());
        let stop = StopRule {
            max_frames: 4000,
            target_frame_errors: 40,
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| simulate(&code, &dec, &[1.0, 3.0], &stop, 9).unwrap())
        };
        let a = run(1);
        let b = run(3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.frames, y.frames);
            assert_eq!(x.bit_errors, y.bit_errors);
            assert_eq!(x.frame_errors, y.frame_errors);
        }
    }

    #[test]
    fn soft_stats_identity_and_shift() {
        let mut rng = RngStream::new(4, 0);
        let g = Array2::from_shape_fn((7, 50), |_| 3.0 * rng.gaussian());
        let rows = soft_stats(&g, &g);
        assert_eq!(rows[0].mse, 0.0);
        assert_eq!(rows[0].kl, 0.0);
        assert_eq!(rows[2].mean, 0.0);
        assert_eq!(rows[2].var, 0.0);

        let shifted = g.mapv(|x| x + 1.0);
        let rows = soft_stats(&shifted, &g);
        assert!((rows[2].mean - 1.0).abs() < 1e-12);
        assert!(rows[2].var < 1e-20);
        assert!((rows[0].mse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_basics() {
        let (edges, counts) = histogram(&[0.5], 4, (0.0, 1.0)).unwrap();
        assert_eq!(edges.len(), 5);
        assert_eq!(counts, vec![0, 0, 1, 0]);
        // uniform grid: equal counts
        let samples: Vec<f64> = (0..400).map(|i| (i as f64 + 0.5) / 400.0).collect();
        let (_, counts) = histogram(&samples, 4, (0.0, 1.0)).unwrap();
        assert_eq!(counts, vec![100; 4]);
        // out-of-range clamps, count preserved
        let (_, counts) = histogram(&[-5.0, 5.0], 4, (0.0, 1.0)).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 2);
        assert!(histogram(&[], 4, (0.0, 1.0)).is_err());
        assert!(histogram(&[1.0], 0, (0.0, 1.0)).is_err());
    }

    #[test]
    fn histogram_gaussian_chi_square() {
        let mut rng = RngStream::new(77, 0);
        let n = 1_000_000usize;
        let samples: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let bins = 20;
        let (edges, counts) = histogram(&samples, bins, (-4.0, 4.0)).unwrap();
        let phi = |x: f64| 1.0 - q_func(x);
        let mut chi2 = 0.0;
        for i in 0..bins {
            // edge bins absorb the clamped tails
            let lo = if i == 0 { f64::NEG_INFINITY } else { edges[i] };
            let hi = if i == bins - 1 {
                f64::INFINITY
            } else {
                edges[i + 1]
            };
            let p = match (lo.is_finite(), hi.is_finite()) {
                (false, _) => phi(hi),
                (_, false) => 1.0 - phi(lo),
                _ => phi(hi) - phi(lo),
            };
            let expect = p * n as f64;
            chi2 += (counts[i] as f64 - expect).powi(2) / expect;
        }
        // chi-square critical value, 19 degrees of freedom, 1% level
        assert!(chi2 < 36.191, "chi2 {chi2}");
    }

    #[test]
    fn csv_schemas() {
        let p = SimPoint {
            esn0_db: 2.0,
            frames: 10,
            bit_errors: 3,
            frame_errors: 2,
            ber: 0.075,
            fer: 0.2,
            ci_low: 0.05,
            ci_high: 0.5,
            wall_secs: 0.1,
        };
        let csv = sim_csv(&[p]);
        assert!(csv.starts_with("esn0_db,frames,bit_errors,frame_errors,ber,fer,ci_low,ci_high\n"));
        assert_eq!(csv.lines().count(), 2);
        let (edges, counts) = histogram(&[0.1, 0.9], 2, (0.0, 1.0)).unwrap();
        assert_eq!(
            hist_csv(&edges, &counts).lines().next().unwrap(),
            "left,right,count"
        );
    }
}
