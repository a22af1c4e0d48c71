//! Turbo-product codes: two-dimensional encoding over systematic component
//! codes, iterative column/row decoding with pluggable soft-in/soft-out
//! component decoders, L1 input normalization for the neural component, and
//! joint fine-tuning of the model with the extrinsic scale factors.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, NodeId, Tape, Tensor};
use crate::channel::{esn0_db_to_sigma2, RngStream};
use crate::decoders::{chase2, PYNDIAH_BETA};
use crate::error::{Error, Result};
use crate::gf2::{BitVec, CosetTable, LinearCode};
use crate::nn::{bce_loss, decode_soft, BoundModel, DecoderModel};
use crate::train::map_reference;

/// Product of two systematic component codes. The codeword matrix is
/// `col_code.n x row_code.n`: every column belongs to the column code, every
/// row to the row code.
pub struct TpcCode {
    pub col_code: Arc<LinearCode>,
    pub row_code: Arc<LinearCode>,
}

impl TpcCode {
    pub fn new(col_code: Arc<LinearCode>, row_code: Arc<LinearCode>) -> Result<Self> {
        for c in [&col_code, &row_code] {
            if !c.is_systematic() {
                return Err(Error::UnsupportedCode(format!(
                    "tpc component {} is not systematic",
                    c.name
                )));
            }
        }
        Ok(TpcCode { col_code, row_code })
    }

    /// Codeword matrix height (column-code length).
    pub fn n1(&self) -> usize {
        self.col_code.n
    }

    /// Codeword matrix width (row-code length).
    pub fn n2(&self) -> usize {
        self.row_code.n
    }

    pub fn rate(&self) -> f64 {
        (self.col_code.k * self.row_code.k) as f64 / (self.n1() * self.n2()) as f64
    }

    /// Encode a k1 x k2 information block: columns through the column code,
    /// then every full row through the row code.
    pub fn encode(&self, u: &Array2<u8>) -> Result<Array2<u8>> {
        let (k1, k2) = (self.col_code.k, self.row_code.k);
        if u.dim() != (k1, k2) {
            return Err(Error::DimMismatch(format!(
                "tpc encode: U is {:?}, expected ({k1}, {k2})",
                u.dim()
            )));
        }
        let mut cols = Array2::zeros((self.n1(), k2));
        for j in 0..k2 {
            let bits: Vec<u8> = (0..k1).map(|i| u[[i, j]]).collect();
            let cw = self.col_code.encode(&BitVec::from_bits(&bits))?;
            for (i, b) in cw.to_bits().into_iter().enumerate() {
                cols[[i, j]] = b;
            }
        }
        let mut c = Array2::zeros((self.n1(), self.n2()));
        for i in 0..self.n1() {
            let bits: Vec<u8> = (0..k2).map(|j| cols[[i, j]]).collect();
            let cw = self.row_code.encode(&BitVec::from_bits(&bits))?;
            for (j, b) in cw.to_bits().into_iter().enumerate() {
                c[[i, j]] = b;
            }
        }
        Ok(c)
    }
}

/// L1 batch normalization: kappa = count / sum |entries|, scaled matrix has
/// unit mean absolute value. All-zero input passes through with kappa = 1.
pub fn l1_normalize(gamma: &Array2<f64>) -> (Array2<f64>, f64) {
    let total: f64 = gamma.iter().map(|x| x.abs()).sum();
    if total == 0.0 {
        return (gamma.clone(), 1.0);
    }
    let kappa = gamma.len() as f64 / total;
    (gamma.mapv(|x| kappa * x), kappa)
}

/// Soft-in/soft-out component decoder applied to every row of a matrix.
pub trait SoftDecoder: Sync {
    /// Decode each row of `a` as one LLR vector; `half_iter` is the 0-based
    /// index of the current half-iteration (for schedules). The boolean flags
    /// any per-row decode failure (the failed row passes through unchanged).
    fn decode_rows(&self, a: &Array2<f64>, half_iter: usize) -> Result<(Array2<f64>, bool)>;
}

/// Exact bitwise MAP rows.
pub struct MapComponent(pub Arc<LinearCode>);

impl SoftDecoder for MapComponent {
    fn decode_rows(&self, a: &Array2<f64>, _half_iter: usize) -> Result<(Array2<f64>, bool)> {
        let mut out = a.clone();
        for mut row in out.rows_mut() {
            let gamma: Vec<f64> = row.to_vec();
            for (x, v) in row.iter_mut().zip(map_reference(&self.0, &gamma)?) {
                *x = v;
            }
        }
        Ok((out, false))
    }
}

/// Pass-through decoder (reduction tests).
pub struct IdentityComponent;

impl SoftDecoder for IdentityComponent {
    fn decode_rows(&self, a: &Array2<f64>, _half_iter: usize) -> Result<(Array2<f64>, bool)> {
        Ok((a.clone(), false))
    }
}

/// Chase-II + Pyndiah soft output; rows where Chase finds no codeword pass
/// through and raise the failure flag. Inputs are L1-normalized per call so
/// the beta fallback (a normalized-reliability constant) stays commensurate
/// with the metric-difference outputs, and the result is rescaled by 1/kappa.
pub struct ChasePyndiahComponent {
    pub code: Arc<LinearCode>,
    pub table: CosetTable,
    pub p: usize,
}

impl SoftDecoder for ChasePyndiahComponent {
    fn decode_rows(&self, a: &Array2<f64>, half_iter: usize) -> Result<(Array2<f64>, bool)> {
        let (scaled, kappa) = l1_normalize(a);
        let beta = *PYNDIAH_BETA
            .get(half_iter)
            .or(PYNDIAH_BETA.last())
            .unwrap_or(&1.0);
        let mut out = scaled;
        let mut failed = false;
        for mut row in out.rows_mut() {
            let gamma: Vec<f64> = row.to_vec();
            let res = chase2(&self.code, &gamma, self.p, &self.table)?;
            let Some(decision_idx) = res.decision else {
                failed = true;
                continue;
            };
            let (d, m_d) = res.candidates[decision_idx];
            for (j, x) in row.iter_mut().enumerate() {
                let d_j = (d >> j) & 1;
                let sign = 1.0 - 2.0 * d_j as f64;
                let competitor = res
                    .candidates
                    .iter()
                    .filter(|&&(c2, _)| (c2 >> j) & 1 != d_j)
                    .map(|&(_, m)| m)
                    .fold(f64::NEG_INFINITY, f64::max);
                *x = if competitor == f64::NEG_INFINITY {
                    // no competitor: beta acts as an extrinsic increment on
                    // top of the input, never as a (weak) absolute posterior
                    gamma[j] + beta * sign
                } else {
                    (m_d - competitor) / 2.0 * sign
                };
            }
        }
        Ok((out.mapv(|x| x / kappa), failed))
    }
}

/// Neural soft decoder; every call normalizes its input matrix with
/// Rows decoded by the model at their natural scale; a model trained with
/// per-frame normalization applies it internally.
pub struct NeuralComponent(pub Arc<DecoderModel>);

impl SoftDecoder for NeuralComponent {
    fn decode_rows(&self, a: &Array2<f64>, _half_iter: usize) -> Result<(Array2<f64>, bool)> {
        let hat = self.0.decode_llr_batch(&a.t().to_owned());
        Ok((hat.t().to_owned(), false))
    }
}

pub struct TpcDecodeResult {
    /// Final LLR state of the iteration.
    pub gamma_hat: Array2<f64>,
    /// Per half-iteration decoder outputs (full posteriors), all oriented as
    /// the codeword matrix; 2N entries.
    pub iter_outputs: Vec<Array2<f64>>,
    /// Any component decode failure during the run.
    pub failed: bool,
}

impl TpcDecodeResult {
    pub fn hard_bits(&self) -> Array2<u8> {
        self.gamma_hat.mapv(|x| (x < 0.0) as u8)
    }
}

fn half_pass(
    state: &Array2<f64>,
    extrinsic: &mut Array2<f64>,
    decoder: &dyn SoftDecoder,
    alpha: f64,
    half_iter: usize,
    transposed: bool,
) -> Result<(Array2<f64>, Array2<f64>, bool)> {
    let a = if transposed {
        state.t().to_owned() - &*extrinsic
    } else {
        state - &*extrinsic
    };
    let (l0, failed) = decoder.decode_rows(&a, half_iter)?;
    *extrinsic = (&l0 - &a).mapv(|x| alpha * x);
    let new_state = if transposed {
        a.t().to_owned() + extrinsic.t()
    } else {
        &a + &*extrinsic
    };
    let output = if transposed { l0.t().to_owned() } else { l0 };
    Ok((new_state, output, failed))
}

#[allow(clippy::too_many_arguments)]
fn tpc_decode_impl(
    gamma: &Array2<f64>,
    tpc: &TpcCode,
    d_c: &dyn SoftDecoder,
    d_r: &dyn SoftDecoder,
    alpha_c: &[f64],
    alpha_r: &[f64],
    n_iters: usize,
    row_first: bool,
) -> Result<TpcDecodeResult> {
    if gamma.dim() != (tpc.n1(), tpc.n2()) {
        return Err(Error::DimMismatch(format!(
            "tpc decode: gamma is {:?}, expected ({}, {})",
            gamma.dim(),
            tpc.n1(),
            tpc.n2()
        )));
    }
    if alpha_c.len() != n_iters || alpha_r.len() != n_iters {
        return Err(Error::DimMismatch(format!(
            "tpc decode: alpha lists must have length N={n_iters}"
        )));
    }
    let mut state = gamma.clone();
    let mut l_c = Array2::zeros((tpc.n2(), tpc.n1()));
    let mut l_r = Array2::zeros((tpc.n1(), tpc.n2()));
    let mut outputs = Vec::with_capacity(2 * n_iters);
    let mut failed = false;
    for i in 0..n_iters {
        let mut passes = [
            // column pass works on the transposed state so each decoded row
            // is one column of the codeword matrix
            (true, d_c, alpha_c[i]),
            (false, d_r, alpha_r[i]),
        ];
        if row_first {
            passes.swap(0, 1);
        }
        for (transposed, decoder, alpha) in passes {
            let extrinsic = if transposed { &mut l_c } else { &mut l_r };
            let (s, out, f) =
                half_pass(&state, extrinsic, decoder, alpha, outputs.len(), transposed)?;
            state = s;
            outputs.push(out);
            failed |= f;
        }
    }
    Ok(TpcDecodeResult {
        gamma_hat: state,
        iter_outputs: outputs,
        failed,
    })
}

/// Iterative TPC decoding: per iteration a column pass then a row pass, each
/// subtracting the stored extrinsic, decoding, scaling the new extrinsic by
/// the pass's alpha, and re-adding.
pub fn tpc_decode(
    gamma: &Array2<f64>,
    tpc: &TpcCode,
    d_c: &dyn SoftDecoder,
    d_r: &dyn SoftDecoder,
    alpha_c: &[f64],
    alpha_r: &[f64],
    n_iters: usize,
) -> Result<TpcDecodeResult> {
    tpc_decode_impl(gamma, tpc, d_c, d_r, alpha_c, alpha_r, n_iters, false)
}

/// Row-first variant: exact mirror of `tpc_decode` under transposition.
pub fn tpc_decode_row_first(
    gamma: &Array2<f64>,
    tpc: &TpcCode,
    d_c: &dyn SoftDecoder,
    d_r: &dyn SoftDecoder,
    alpha_c: &[f64],
    alpha_r: &[f64],
    n_iters: usize,
) -> Result<TpcDecodeResult> {
    tpc_decode_impl(gamma, tpc, d_c, d_r, alpha_c, alpha_r, n_iters, true)
}

/// Numerically stable BCE of one LLR matrix against transmitted bits,
/// averaged over all positions.
pub fn bce_of_llrs(gamma: &Array2<f64>, c: &Array2<u8>) -> f64 {
    assert_eq!(gamma.dim(), c.dim());
    let total: f64 = gamma
        .iter()
        .zip(c.iter())
        .map(|(&g, &b)| {
            let m = (1.0 - 2.0 * b as f64) * g;
            if m > 0.0 {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        })
        .sum();
    total / gamma.len() as f64
}

/// Exponentially weighted BCE over all 2N half-iteration outputs:
/// beta = (e^0, ..., e^(2N-1)), loss = sum beta_j BCE_j / (2N |beta|_1).
pub fn tpc_finetune_loss(iter_outputs: &[Array2<f64>], c: &Array2<u8>) -> f64 {
    let two_n = iter_outputs.len();
    assert!(two_n >= 1, "no iteration outputs");
    let beta: Vec<f64> = (0..two_n).map(|j| (j as f64).exp()).collect();
    let norm: f64 = beta.iter().sum();
    let weighted: f64 = iter_outputs
        .iter()
        .zip(&beta)
        .map(|(g, b)| b * bce_of_llrs(g, c))
        .sum();
    weighted / (two_n as f64 * norm)
}

// ---------------------------------------------------------------------------
// differentiable path (square TPC with a shared neural component)
// ---------------------------------------------------------------------------

/// One neural decode of the rows of `a` on the tape. Inputs pass through at
/// their natural scale: iteration magnitudes carry reliability information
/// the component model reads directly.
fn neural_rows_tape(
    tape: &mut Tape,
    bound: &BoundModel,
    supports: &Arc<Vec<Vec<usize>>>,
    a: NodeId,
) -> NodeId {
    let x = tape.transpose(a); // columns are codewords
    let feat_abs = tape.abs(x);
    let feat_syn = tape.soft_syndrome(x, supports.clone());
    let d = tape.concat_rows(feat_abs, feat_syn);
    let (hat, _) = decode_soft(tape, bound, x, d);
    tape.transpose(hat)
}

/// Unrolled Algorithm-2 forward on the tape for a square product of the
/// model's component code; returns the 2N half-iteration outputs (codeword
/// orientation) and the final state.
pub fn tpc_decode_tape(
    tape: &mut Tape,
    bound: &BoundModel,
    supports: &Arc<Vec<Vec<usize>>>,
    gamma: NodeId,
    alpha_c: &[NodeId],
    alpha_r: &[NodeId],
    n_iters: usize,
) -> (Vec<NodeId>, NodeId) {
    let n = tape.value(gamma).nrows();
    let mut state = gamma;
    let mut l_c = tape.constant(Tensor::zeros((n, n)));
    let mut l_r = tape.constant(Tensor::zeros((n, n)));
    let mut outputs = Vec::with_capacity(2 * n_iters);
    for i in 0..n_iters {
        for transposed in [true, false] {
            let a = if transposed {
                let st = tape.transpose(state);
                tape.sub(st, l_c)
            } else {
                tape.sub(state, l_r)
            };
            let l0 = neural_rows_tape(tape, bound, supports, a);
            let diff = tape.sub(l0, a);
            let alpha = if transposed { alpha_c[i] } else { alpha_r[i] };
            let ext = tape.mul_scalar_node(diff, alpha);
            if transposed {
                l_c = ext;
                let at = tape.transpose(a);
                let et = tape.transpose(ext);
                state = tape.add(at, et);
                outputs.push(tape.transpose(l0));
            } else {
                l_r = ext;
                state = tape.add(a, ext);
                outputs.push(l0);
            }
        }
    }
    (outputs, state)
}

/// Weighted fine-tuning loss on the tape for one frame.
pub fn tpc_finetune_loss_tape(tape: &mut Tape, iter_outputs: &[NodeId], labels: NodeId) -> NodeId {
    let two_n = iter_outputs.len();
    let beta: Vec<f64> = (0..two_n).map(|j| (j as f64).exp()).collect();
    let norm: f64 = beta.iter().sum();
    let mut total: Option<NodeId> = None;
    for (&out, &b) in iter_outputs.iter().zip(&beta) {
        let bce = bce_loss(tape, out, labels);
        let w = tape.scalar_mul(bce, b / (two_n as f64 * norm));
        total = Some(match total {
            Some(t) => tape.add(t, w),
            None => w,
        });
    }
    total.expect("no iteration outputs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpcFinetuneConfig {
    pub n_iters: usize,
    pub lr: f64,
    /// One epoch is one sampled batch step.
    pub epochs: usize,
    pub batch: usize,
    pub alpha_init: f64,
    pub esn0_range_db: [f64; 2],
    pub seed: u64,
}

impl Default for TpcFinetuneConfig {
    fn default() -> Self {
        TpcFinetuneConfig {
            n_iters: 2,
            lr: 1e-6,
            epochs: 4000,
            batch: 256,
            alpha_init: 0.7,
            esn0_range_db: [2.0, 2.0],
            seed: 1,
        }
    }
}

/// One fine-tuning frame: random information block, encoded, BPSK + AWGN.
pub fn sample_tpc_frame(
    tpc: &TpcCode,
    esn0_range_db: [f64; 2],
    rng: &mut RngStream,
) -> Result<(Array2<f64>, Array2<u8>)> {
    let (k1, k2) = (tpc.col_code.k, tpc.row_code.k);
    let u = Array2::from_shape_fn((k1, k2), |_| (rng.uniform() < 0.5) as u8);
    let c = tpc.encode(&u)?;
    let esn0 = if esn0_range_db[0] == esn0_range_db[1] {
        esn0_range_db[0]
    } else {
        rng.uniform_in(esn0_range_db[0], esn0_range_db[1])
    };
    let sigma2 = esn0_db_to_sigma2(esn0);
    let sigma = sigma2.sqrt();
    let gamma = c.mapv(|b| {
        let x = 1.0 - 2.0 * b as f64;
        2.0 * (x + sigma * rng.gaussian()) / sigma2
    });
    Ok((gamma, c))
}

/// Fine-tuning loss of the current model + alphas on a frame batch, using the
/// numeric decode path (held-out evaluation).
pub fn tpc_eval_loss(
    model: &Arc<DecoderModel>,
    tpc: &TpcCode,
    alpha_c: &[f64],
    alpha_r: &[f64],
    frames: &[(Array2<f64>, Array2<u8>)],
) -> Result<f64> {
    let comp = NeuralComponent(model.clone());
    let mut total = 0.0;
    for (gamma, c) in frames {
        let res = tpc_decode(gamma, tpc, &comp, &comp, alpha_c, alpha_r, alpha_c.len())?;
        total += tpc_finetune_loss(&res.iter_outputs, c);
    }
    Ok(total / frames.len() as f64)
}

/// Joint Adam descent of the component model and the 2N extrinsic scales
/// through the unrolled iteration. Returns (alpha_c, alpha_r, per-epoch loss).
pub fn tpc_finetune(
    model: &mut DecoderModel,
    tpc: &TpcCode,
    cfg: &TpcFinetuneConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if cfg.n_iters == 0 {
        return Err(Error::Config("tpc.n_iters must be >= 1".into()));
    }
    if tpc.n1() != tpc.n2() || tpc.col_code.n != model.code.n {
        return Err(Error::UnsupportedCode(
            "tpc fine-tuning needs a square product of the model's code".into(),
        ));
    }
    let supports = Arc::new(model.code.row_supports.clone());
    let n_model_params = model.params.len();

    let mut joint = model.params.clone();
    for i in 0..cfg.n_iters {
        joint.insert(
            &format!("alpha_c.{i}"),
            Tensor::from_elem((1, 1), cfg.alpha_init),
        );
    }
    for i in 0..cfg.n_iters {
        joint.insert(
            &format!("alpha_r.{i}"),
            Tensor::from_elem((1, 1), cfg.alpha_init),
        );
    }
    let mut adam = AdamState::new(&joint, cfg.lr);
    let mut data_rng = RngStream::new(cfg.seed, 20);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let ids: Vec<(String, NodeId)> = joint
            .tensors()
            .map(|(name, t)| (name.to_string(), tape.leaf(t.clone())))
            .collect();
        let bound = BoundModel::from_parts(
            ids[..n_model_params].to_vec(),
            model.layers,
            model.time_steps,
            model.hidden,
        );
        let alpha_c_ids: Vec<NodeId> = (0..cfg.n_iters)
            .map(|i| ids[n_model_params + i].1)
            .collect();
        let alpha_r_ids: Vec<NodeId> = (0..cfg.n_iters)
            .map(|i| ids[n_model_params + cfg.n_iters + i].1)
            .collect();

        let mut loss_node: Option<NodeId> = None;
        for _ in 0..cfg.batch {
            let (gamma, c) = sample_tpc_frame(tpc, cfg.esn0_range_db, &mut data_rng)?;
            let g = tape.constant(gamma);
            let labels = tape.constant(c.mapv(|b| b as f64));
            let (outputs, _) = tpc_decode_tape(
                &mut tape,
                &bound,
                &supports,
                g,
                &alpha_c_ids,
                &alpha_r_ids,
                cfg.n_iters,
            );
            let frame_loss = tpc_finetune_loss_tape(&mut tape, &outputs, labels);
            loss_node = Some(match loss_node {
                Some(t) => tape.add(t, frame_loss),
                None => frame_loss,
            });
        }
        let sum = loss_node.expect("batch >= 1");
        let loss = tape.scalar_mul(sum, 1.0 / cfg.batch as f64);
        let loss_val = tape.scalar(loss);
        if !loss_val.is_finite() {
            return Err(Error::Diverged(format!(
                "tpc fine-tune loss {loss_val} at epoch {epoch}"
            )));
        }
        history.push(loss_val);
        let grads = tape.backward(loss);
        let grad_vec: Vec<Tensor> = ids
            .iter()
            .map(|(name, id)| {
                let shape = joint.get(name).unwrap().dim();
                grads.of(*id, shape)
            })
            .collect();
        adam.step(&mut joint, &grad_vec);
    }

    for (name, t) in model.params.tensors_mut() {
        t.assign(joint.get(name).unwrap());
    }
    let alpha_c: Vec<f64> = (0..cfg.n_iters)
        .map(|i| joint.get(&format!("alpha_c.{i}")).unwrap()[[0, 0]])
        .collect();
    let alpha_r: Vec<f64> = (0..cfg.n_iters)
        .map(|i| joint.get(&format!("alpha_r.{i}")).unwrap()[[0, 0]])
        .collect();
    Ok((alpha_c, alpha_r, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::code::{hamming, spc};
    use crate::gf2::make_systematic;
    use crate::gf2::CodeSpec;
    use ndarray::array;

    fn spc3_square() -> TpcCode {
        let c = Arc::new(spc(3).unwrap());
        TpcCode::new(c.clone(), c).unwrap()
    }

    fn hamming_sys() -> Arc<LinearCode> {
        Arc::new(make_systematic(&hamming(3).unwrap()).unwrap())
    }

    #[test]
    fn encode_hand_case() {
        let tpc = spc3_square();
        let u = array![[1u8, 0], [0, 1]];
        let c = tpc.encode(&u).unwrap();
        assert_eq!(c, array![[1u8, 0, 1], [0, 1, 1], [1, 1, 0]]);
        // zero block stays zero
        assert!(tpc
            .encode(&Array2::zeros((2, 2)))
            .unwrap()
            .iter()
            .all(|&b| b == 0));
    }

    #[test]
    fn encode_rows_and_columns_are_codewords() {
        let col = hamming_sys();
        let row = Arc::new(spc(5).unwrap());
        let tpc = TpcCode::new(col.clone(), row.clone()).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..20 {
            let u = Array2::from_shape_fn((4, 4), |_| (rng.uniform() < 0.5) as u8);
            let c = tpc.encode(&u).unwrap();
            for i in 0..tpc.n1() {
                let bits: Vec<u8> = (0..tpc.n2()).map(|j| c[[i, j]]).collect();
                assert!(row.is_codeword(&BitVec::from_bits(&bits)));
            }
            for j in 0..tpc.n2() {
                let bits: Vec<u8> = (0..tpc.n1()).map(|i| c[[i, j]]).collect();
                assert!(col.is_codeword(&BitVec::from_bits(&bits)));
            }
        }
    }

    #[test]
    fn non_systematic_component_rejected() {
        let cyclic = Arc::new(hamming(3).unwrap());
        assert!(TpcCode::new(cyclic.clone(), cyclic).is_err());
    }

    #[test]
    fn l1_normalize_cases() {
        let g = array![[4.0, -4.0], [4.0, 4.0]];
        let (gn, k) = l1_normalize(&g);
        assert_eq!(k, 0.25);
        assert_eq!(gn, array![[1.0, -1.0], [1.0, 1.0]]);
        // unit mean is a fixed point
        let (gn2, k2) = l1_normalize(&gn);
        assert_eq!(k2, 1.0);
        assert_eq!(gn2, gn);
        // zero input passes through
        let z: Array2<f64> = Array2::zeros((2, 2));
        let (zn, kz) = l1_normalize(&z);
        assert_eq!(kz, 1.0);
        assert_eq!(zn, z);
        // signs preserved
        assert!(gn
            .iter()
            .zip(g.iter())
            .all(|(a, b)| a.signum() == b.signum()));
    }

    #[test]
    fn identity_reduction() {
        let tpc = spc3_square();
        let gamma = array![[1.0, -2.0, 0.5], [0.3, 1.1, -0.7], [2.0, 0.2, 0.9]];
        let res = tpc_decode(
            &gamma,
            &tpc,
            &IdentityComponent,
            &IdentityComponent,
            &[1.0],
            &[1.0],
            1,
        )
        .unwrap();
        assert_eq!(res.gamma_hat, gamma);
        assert_eq!(res.iter_outputs.len(), 2);
        assert_eq!(res.iter_outputs[0], gamma);
        assert_eq!(res.iter_outputs[1], gamma);
    }

    #[test]
    fn zero_alpha_reduction() {
        // alpha = 0: extrinsics stay zero, every pass sees raw channel LLRs,
        // and the last recorded output is that pass's plain decode
        let tpc = spc3_square();
        let comp = MapComponent(tpc.row_code.clone());
        let gamma = array![[1.0, -2.0, 0.5], [0.3, 1.1, -0.7], [2.0, 0.2, 0.9]];
        let res = tpc_decode(&gamma, &tpc, &comp, &comp, &[0.0, 0.0], &[0.0, 0.0], 2).unwrap();
        assert_eq!(res.gamma_hat, gamma);
        let (plain, _) = comp.decode_rows(&gamma, 0).unwrap();
        let last = res.iter_outputs.last().unwrap();
        assert!(last
            .iter()
            .zip(plain.iter())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn transpose_swap_mirrors_row_first() {
        let col = hamming_sys();
        let row = Arc::new(spc(5).unwrap());
        let tpc = TpcCode::new(col.clone(), row.clone()).unwrap();
        let swapped = TpcCode::new(row.clone(), col.clone()).unwrap();
        let d_col = MapComponent(col);
        let d_row = MapComponent(row);
        let mut rng = RngStream::new(8, 0);
        let gamma = Array2::from_shape_fn((7, 5), |_| 2.0 * rng.gaussian());
        let a = tpc_decode(&gamma, &tpc, &d_col, &d_row, &[1.0, 1.0], &[1.0, 1.0], 2).unwrap();
        let b = tpc_decode_row_first(
            &gamma.t().to_owned(),
            &swapped,
            &d_row,
            &d_col,
            &[1.0, 1.0],
            &[1.0, 1.0],
            2,
        )
        .unwrap();
        let bt = b.gamma_hat.t().to_owned();
        assert!(a
            .gamma_hat
            .iter()
            .zip(bt.iter())
            .all(|(x, y)| (x - y).abs() < 1e-9));
    }

    #[test]
    fn finetune_loss_values() {
        // N=1, both outputs zero LLRs -> ln 2 / 2
        let z: Array2<f64> = Array2::zeros((3, 3));
        let c: Array2<u8> = Array2::zeros((3, 3));
        let loss = tpc_finetune_loss(&[z.clone(), z], &c);
        assert!((loss - std::f64::consts::LN_2 / 2.0).abs() < 1e-12);
        // perfect LLRs -> ~0
        let perfect = Array2::from_elem((3, 3), 1e4);
        let loss = tpc_finetune_loss(&[perfect.clone(), perfect], &c);
        assert!(loss < 1e-9);
        // beta weights: N=2 gives (1, e, e^2, e^3)
        let beta: Vec<f64> = (0..4).map(|j| (j as f64).exp()).collect();
        assert_eq!(beta[0], 1.0);
        assert!((beta[3] - std::f64::consts::E.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn bce_of_llrs_matches_naive() {
        let g: Array2<f64> = array![[0.7, -1.3], [2.1, -0.2]];
        let c = array![[0u8, 1], [1, 0]];
        let naive: f64 = g
            .iter()
            .zip(c.iter())
            .map(|(&gi, &bi)| {
                let p1 = 1.0 / (1.0 + gi.exp());
                if bi == 1 {
                    -p1.ln()
                } else {
                    -(1.0 - p1).ln()
                }
            })
            .sum::<f64>()
            / 4.0;
        assert!((bce_of_llrs(&g, &c) - naive).abs() < 1e-12);
    }

    fn toy_tpc_model(code: Arc<LinearCode>) -> DecoderModel {
        let mut rng = RngStream::new(17, 0);
        DecoderModel::new(code, CodeSpec::Hamming { m: 3 }, 1, 2, Some(8), &mut rng).unwrap()
    }

    #[test]
    fn tape_decode_matches_numeric_path() {
        let code = hamming_sys();
        let tpc = TpcCode::new(code.clone(), code.clone()).unwrap();
        let model = Arc::new(toy_tpc_model(code.clone()));
        let mut rng = RngStream::new(21, 0);
        let (gamma, c) = sample_tpc_frame(&tpc, [2.0, 2.0], &mut rng).unwrap();

        let comp = NeuralComponent(model.clone());
        let res = tpc_decode(&gamma, &tpc, &comp, &comp, &[0.7, 0.7], &[0.7, 0.7], 2).unwrap();
        let numeric_loss = tpc_finetune_loss(&res.iter_outputs, &c);

        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let supports = Arc::new(code.row_supports.clone());
        let g = tape.constant(gamma);
        let a07 = tape.constant(Tensor::from_elem((1, 1), 0.7));
        let (outputs, state) =
            tpc_decode_tape(&mut tape, &bound, &supports, g, &[a07, a07], &[a07, a07], 2);
        let labels = tape.constant(c.mapv(|b| b as f64));
        let tape_loss = tpc_finetune_loss_tape(&mut tape, &outputs, labels);
        assert!((tape.scalar(tape_loss) - numeric_loss).abs() < 1e-9);
        assert!(tape
            .value(state)
            .iter()
            .zip(res.gamma_hat.iter())
            .all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn finetune_zero_lr_keeps_everything() {
        let code = hamming_sys();
        let tpc = TpcCode::new(code.clone(), code.clone()).unwrap();
        let mut model = toy_tpc_model(code);
        let before = model.params.clone();
        let cfg = TpcFinetuneConfig {
            n_iters: 1,
            lr: 0.0,
            epochs: 2,
            batch: 2,
            ..TpcFinetuneConfig::default()
        };
        let (ac, ar, hist) = tpc_finetune(&mut model, &tpc, &cfg).unwrap();
        assert_eq!(ac, vec![0.7]);
        assert_eq!(ar, vec![0.7]);
        assert_eq!(hist.len(), 2);
        assert_eq!(before, model.params);
    }

    #[test]
    fn finetune_lowers_held_out_loss() {
        let code = hamming_sys();
        let tpc = TpcCode::new(code.clone(), code.clone()).unwrap();
        let mut model = toy_tpc_model(code);
        let mut held_rng = RngStream::new(777, 5);
        let held: Vec<_> = (0..24)
            .map(|_| sample_tpc_frame(&tpc, [2.0, 2.0], &mut held_rng).unwrap())
            .collect();

        let shared = Arc::new(toy_tpc_model(hamming_sys()));
        let before = tpc_eval_loss(&shared, &tpc, &[0.7], &[0.7], &held).unwrap();
        let cfg = TpcFinetuneConfig {
            n_iters: 1,
            lr: 3e-3,
            epochs: 40,
            batch: 8,
            seed: 2,
            ..TpcFinetuneConfig::default()
        };
        let (ac, ar, hist) = tpc_finetune(&mut model, &tpc, &cfg).unwrap();
        assert!(hist.iter().all(|l| l.is_finite()));
        assert!(ac[0].is_finite() && ar[0].is_finite());
        let tuned = Arc::new(model);
        let after = tpc_eval_loss(&tuned, &tpc, &ac, &ar, &held).unwrap();
        assert!(
            after < before,
            "held-out loss before {before}, after {after}"
        );
    }
}
