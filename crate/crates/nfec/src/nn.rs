//! Soft-output syndrome-based neural decoder: soft-syndrome preprocessing,
//! Stacked-GRU noise estimator with an FC head, the LLR postprocessing step,
//! BCE loss, and the MAP-referenced regularizers.
//!
//! The estimator sees only reliabilities and the soft syndrome, so its input
//! does not depend on the transmitted codeword.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ParamSet, Tape, Tensor};
use crate::channel::RngStream;
use crate::error::{Error, Result};
use crate::gf2::{CodeSpec, LinearCode};

pub const PROB_CLAMP: f64 = 1e-12;
pub const KL_CLAMP: f64 = 1e-12;

#[inline]
fn sign_pos(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Soft syndrome of one LLR vector: per H row, min reliability times the
/// product of signs over the row support; sign(0) = +1.
pub fn soft_syndrome(code: &LinearCode, gamma: &[f64]) -> Vec<f64> {
    code.row_supports
        .iter()
        .map(|support| {
            let mut min_abs = f64::INFINITY;
            let mut prod = 1.0f64;
            for &j in support {
                min_abs = min_abs.min(gamma[j].abs());
                prod *= sign_pos(gamma[j]);
            }
            min_abs * prod
        })
        .collect()
}

/// Noise-estimator feature vector d = [|gamma|, s~], length 2n-k.
pub fn build_features(gamma: &[f64], soft_syn: &[f64]) -> Vec<f64> {
    let mut d = Vec::with_capacity(gamma.len() + soft_syn.len());
    d.extend(gamma.iter().map(|g| g.abs()));
    d.extend_from_slice(soft_syn);
    d
}

/// Batched feature matrix (2n-k x B) from a batch of LLR columns (n x B).
pub fn build_feature_matrix(code: &LinearCode, gamma: &Array2<f64>) -> Array2<f64> {
    let n = code.n;
    let r = code.row_supports.len();
    let cols = gamma.ncols();
    let mut d = Array2::zeros((n + r, cols));
    for b in 0..cols {
        let col: Vec<f64> = gamma.column(b).to_vec();
        let s = soft_syndrome(code, &col);
        for i in 0..n {
            d[[i, b]] = col[i].abs();
        }
        for i in 0..r {
            d[[n + i, b]] = s[i];
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    None,
    Mse,
    Kl,
    Moments,
}

/// Stacked-GRU + FC noise estimator bound to one code.
#[derive(Clone)]
pub struct DecoderModel {
    pub code: Arc<LinearCode>,
    pub code_spec: CodeSpec,
    pub layers: usize,
    pub time_steps: usize,
    pub hidden: usize,
    /// Scale every input frame to unit mean |LLR| before decoding and undo
    /// the scaling on the output. Meant for models used as product-code
    /// components, whose inputs arrive pre-normalized the same way.
    pub normalize: bool,
    pub params: ParamSet,
}

impl DecoderModel {
    /// Fresh model; `hidden` of `None` uses the default 5n.
    pub fn new(
        code: Arc<LinearCode>,
        code_spec: CodeSpec,
        layers: usize,
        time_steps: usize,
        hidden: Option<usize>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if layers == 0 || time_steps == 0 {
            return Err(Error::Config("layers and time_steps must be >= 1".into()));
        }
        let n = code.n;
        let h = hidden.unwrap_or(5 * n);
        let feat = 2 * n - code.k;
        let mut params = ParamSet::new();
        let init = |rows: usize, cols: usize, fan_in: usize, rng: &mut RngStream| {
            let a = 1.0 / (fan_in as f64).sqrt();
            Tensor::from_shape_fn((rows, cols), |_| rng.uniform_in(-a, a))
        };
        for l in 0..layers {
            let in_dim = if l == 0 { feat } else { h };
            for gate in ["g", "r", "h"] {
                params.insert(&format!("gru{l}.w_{gate}"), init(h, in_dim, in_dim, rng));
                params.insert(&format!("gru{l}.u_{gate}"), init(h, h, h, rng));
                params.insert(&format!("gru{l}.b_{gate}"), Tensor::zeros((h, 1)));
            }
        }
        params.insert("fc.w", init(n, h * time_steps, h * time_steps, rng));
        params.insert("fc.b", Tensor::zeros((n, 1)));
        params.snap_to_f32();
        Ok(DecoderModel {
            code,
            code_spec,
            layers,
            time_steps,
            hidden: h,
            normalize: false,
            params,
        })
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.code.n - self.code.k
    }

    /// Bind every parameter tensor as a tape leaf, in declaration order.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let ids: Vec<(String, NodeId)> = self
            .params
            .tensors()
            .map(|(name, t)| (name.to_string(), tape.leaf(t.clone())))
            .collect();
        BoundModel {
            ids,
            layers: self.layers,
            time_steps: self.time_steps,
            hidden: self.hidden,
        }
    }

    /// Collect gradients for every parameter, in declaration order.
    pub fn gradients(&self, bound: &BoundModel, grads: &crate::autodiff::Gradients) -> Vec<Tensor> {
        bound
            .ids
            .iter()
            .map(|(name, id)| {
                let shape = self.params.get(name).unwrap().dim();
                grads.of(*id, shape)
            })
            .collect()
    }

    /// Per-frame input scaling: each column is brought to unit mean |LLR|
    /// when `normalize` is set. Returns the scaled matrix and one kappa per
    /// column (all 1 otherwise). All-zero frames pass through with kappa = 1.
    pub fn prepare_input(&self, gamma: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
        if !self.normalize {
            return (gamma.clone(), vec![1.0; gamma.ncols()]);
        }
        let mut out = gamma.clone();
        let mut kappas = Vec::with_capacity(gamma.ncols());
        for mut col in out.columns_mut() {
            let total: f64 = col.iter().map(|x| x.abs()).sum();
            let kappa = if total > 0.0 {
                col.len() as f64 / total
            } else {
                1.0
            };
            col.mapv_inplace(|x| kappa * x);
            kappas.push(kappa);
        }
        (out, kappas)
    }

    /// Batched soft decode outside any training loop: channel LLR columns in,
    /// output LLR columns out.
    pub fn decode_llr_batch(&self, gamma: &Array2<f64>) -> Array2<f64> {
        let (prepared, kappas) = self.prepare_input(gamma);
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let d = build_feature_matrix(&self.code, &prepared);
        let d_node = tape.constant(d);
        let g_node = tape.constant(prepared);
        let (gamma_hat, _) = decode_soft(&mut tape, &bound, g_node, d_node);
        let mut out = tape.value(gamma_hat).clone();
        for (mut col, kappa) in out.columns_mut().into_iter().zip(&kappas) {
            col.mapv_inplace(|x| x / kappa);
        }
        out
    }

    pub fn decode_llr(&self, gamma: &[f64]) -> Vec<f64> {
        let col = Array2::from_shape_vec((gamma.len(), 1), gamma.to_vec()).unwrap();
        self.decode_llr_batch(&col).column(0).to_vec()
    }
}

/// Tape-bound parameter handles for one forward pass.
pub struct BoundModel {
    ids: Vec<(String, NodeId)>,
    pub layers: usize,
    pub time_steps: usize,
    pub hidden: usize,
}

impl BoundModel {
    /// Assemble from externally created leaves (joint optimization setups).
    pub fn from_parts(
        ids: Vec<(String, NodeId)>,
        layers: usize,
        time_steps: usize,
        hidden: usize,
    ) -> Self {
        BoundModel {
            ids,
            layers,
            time_steps,
            hidden,
        }
    }

    pub fn id(&self, name: &str) -> NodeId {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids.iter().map(|(_, id)| *id)
    }
}

/// One GRU cell step (update gate g, reset gate r, candidate q_hat).
pub fn gru_cell(
    tape: &mut Tape,
    bound: &BoundModel,
    layer: usize,
    input: NodeId,
    q_prev: NodeId,
) -> NodeId {
    let lin = |tape: &mut Tape, gate: &str, x: NodeId, q: NodeId| {
        let wx = tape.matmul(bound.id(&format!("gru{layer}.w_{gate}")), x);
        let uq = tape.matmul(bound.id(&format!("gru{layer}.u_{gate}")), q);
        let s = tape.add(wx, uq);
        tape.add_bias(s, bound.id(&format!("gru{layer}.b_{gate}")))
    };
    let g = {
        let z = lin(tape, "g", input, q_prev);
        tape.sigmoid(z)
    };
    let r = {
        let z = lin(tape, "r", input, q_prev);
        tape.sigmoid(z)
    };
    let q_hat = {
        let rq = tape.hadamard(r, q_prev);
        let wx = tape.matmul(bound.id(&format!("gru{layer}.w_h")), input);
        let uq = tape.matmul(bound.id(&format!("gru{layer}.u_h")), rq);
        let s = tape.add(wx, uq);
        let z = tape.add_bias(s, bound.id(&format!("gru{layer}.b_h")));
        tape.tanh(z)
    };
    // q_t = g . q_hat + (1 - g) . q_prev
    let gq = tape.hadamard(g, q_hat);
    let ones = tape.ones_like(g);
    let one_minus_g = tape.sub(ones, g);
    let keep = tape.hadamard(one_minus_g, q_prev);
    tape.add(gq, keep)
}

/// Full Stacked-GRU sweep: the feature matrix is fed at every time step,
/// hidden states start at zero, layer l >= 1 consumes layer l-1's output at
/// the same step. Returns the last layer's outputs for t = 1..T.
pub fn stacked_gru(tape: &mut Tape, bound: &BoundModel, features: NodeId) -> Vec<NodeId> {
    let batch = tape.value(features).ncols();
    let zero_state = Tensor::zeros((bound.hidden, batch));
    // inputs to the current layer at each time step; layer 0 sees d at every t
    let mut inputs: Vec<NodeId> = vec![features; bound.time_steps];
    for layer in 0..bound.layers {
        let mut q = tape.constant(zero_state.clone());
        let mut outputs = Vec::with_capacity(bound.time_steps);
        for &input in inputs.iter() {
            q = gru_cell(tape, bound, layer, input, q);
            outputs.push(q);
        }
        inputs = outputs;
    }
    inputs
}

/// Noise estimate z_hat = fc_w * vec(Q) + fc_b, where vec stacks the per-step
/// outputs in time order.
pub fn estimate_noise(tape: &mut Tape, bound: &BoundModel, features: NodeId) -> NodeId {
    let outputs = stacked_gru(tape, bound, features);
    let mut stacked = outputs[0];
    for &q in &outputs[1..] {
        stacked = tape.concat_rows(stacked, q);
    }
    let wq = tape.matmul(bound.id("fc.w"), stacked);
    tape.add_bias(wq, bound.id("fc.b"))
}

/// Algorithm: z_hat from the estimator, then gamma_hat = gamma - sign(gamma) . z_hat.
/// Returns (gamma_hat, z_hat).
pub fn decode_soft(
    tape: &mut Tape,
    bound: &BoundModel,
    gamma: NodeId,
    features: NodeId,
) -> (NodeId, NodeId) {
    let z_hat = estimate_noise(tape, bound, features);
    let s = tape.sign(gamma);
    let sz = tape.hadamard(s, z_hat);
    (tape.sub(gamma, sz), z_hat)
}

/// BCE with sigmoid: -(1/n) sum c log sig(-g) + (1-c) log(1 - sig(-g)),
/// averaged over every element of the batch.
pub fn bce_loss(tape: &mut Tape, gamma_hat: NodeId, labels: NodeId) -> NodeId {
    let neg_g = tape.neg(gamma_hat);
    let p1 = tape.sigmoid(neg_g); // P(bit = 1)
    let ones = tape.ones_like(p1);
    let p0 = tape.sub(ones, p1);
    let p1 = tape.clamp_min(p1, PROB_CLAMP);
    let p0 = tape.clamp_min(p0, PROB_CLAMP);
    let log_p1 = tape.log(p1);
    let log_p0 = tape.log(p0);
    let ones = tape.ones_like(labels);
    let not_c = tape.sub(ones, labels);
    let t1 = tape.hadamard(labels, log_p1);
    let t0 = tape.hadamard(not_c, log_p0);
    let s = tape.add(t1, t0);
    let m = tape.reduce_mean(s);
    tape.neg(m)
}

/// Pointwise MSE against the MAP reference.
pub fn reg_mse(tape: &mut Tape, gamma_star: NodeId, gamma_hat: NodeId) -> NodeId {
    let d = tape.sub(gamma_star, gamma_hat);
    let sq = tape.hadamard(d, d);
    tape.reduce_mean(sq)
}

/// Pointwise KL-style divergence on clamped absolute LLRs:
/// sum a log(a/b), a = clamp|gamma*|, b = clamp|gamma_hat|. Summed per frame,
/// averaged over the batch.
pub fn reg_kl(tape: &mut Tape, gamma_star: NodeId, gamma_hat: NodeId) -> NodeId {
    let n = tape.value(gamma_hat).nrows() as f64;
    let a_abs = tape.abs(gamma_star);
    let b_abs = tape.abs(gamma_hat);
    let a = tape.clamp_min(a_abs, KL_CLAMP);
    let b = tape.clamp_min(b_abs, KL_CLAMP);
    let la = tape.log(a);
    let lb = tape.log(b);
    let d = tape.sub(la, lb);
    let terms = tape.hadamard(a, d);
    let m = tape.reduce_mean(terms);
    tape.scalar_mul(m, n)
}

/// Moments matching on |LLR| pooled over the whole batch:
/// rho (E|g*| - E|g^|)^2 + (1 - rho) (Var|g*| - Var|g^|)^2.
pub fn reg_moments(tape: &mut Tape, gamma_star: NodeId, gamma_hat: NodeId, rho: f64) -> NodeId {
    let a = tape.abs(gamma_star);
    let b = tape.abs(gamma_hat);
    let mean_d = {
        let ma = tape.reduce_mean(a);
        let mb = tape.reduce_mean(b);
        let d = tape.sub(ma, mb);
        tape.hadamard(d, d)
    };
    let var_d = {
        let va = tape.reduce_var(a);
        let vb = tape.reduce_var(b);
        let d = tape.sub(va, vb);
        tape.hadamard(d, d)
    };
    let t1 = tape.scalar_mul(mean_d, rho);
    let t2 = tape.scalar_mul(var_d, 1.0 - rho);
    tape.add(t1, t2)
}

/// L = L_BCE + alpha_reg L_reg. `gamma_star` may be absent only for
/// `RegKind::None`.
pub fn total_loss(
    tape: &mut Tape,
    gamma_hat: NodeId,
    labels: NodeId,
    gamma_star: Option<NodeId>,
    reg_kind: RegKind,
    alpha_reg: f64,
    rho: f64,
) -> NodeId {
    let bce = bce_loss(tape, gamma_hat, labels);
    let reg = match reg_kind {
        RegKind::None => return bce,
        RegKind::Mse => reg_mse(tape, gamma_star.expect("reg needs gamma_star"), gamma_hat),
        RegKind::Kl => reg_kl(tape, gamma_star.expect("reg needs gamma_star"), gamma_hat),
        RegKind::Moments => reg_moments(
            tape,
            gamma_star.expect("reg needs gamma_star"),
            gamma_hat,
            rho,
        ),
    };
    let scaled = tape.scalar_mul(reg, alpha_reg);
    tape.add(bce, scaled)
}

/// Default regularizer weights.
pub fn default_alpha(reg: RegKind) -> f64 {
    match reg {
        RegKind::None => 0.0,
        RegKind::Mse => 0.01,
        RegKind::Kl => 1e10,
        RegKind::Moments => 0.1,
    }
}

/// Finite-difference check of the whole pipeline (features -> Stacked-GRU ->
/// postprocessing -> loss) against the tape gradients, over every loss kind
/// and a representative set of parameters. Returns the worst relative error.
pub fn pipeline_grad_check(model: &DecoderModel, eps: f64) -> f64 {
    use crate::autodiff::grad_check;
    let code = &model.code;
    let mut rng = RngStream::new(321, 0);
    let n = code.n;
    let batch = 2;
    let gamma = Array2::from_shape_fn((n, batch), |_| 2.0 * rng.gaussian());
    let gamma_star = Array2::from_shape_fn((n, batch), |_| 3.0 * rng.gaussian());
    let labels = Array2::zeros((n, batch));
    let d = build_feature_matrix(code, &gamma);

    let last = model.layers - 1;
    let check_params = [
        "gru0.w_g".to_string(),
        format!("gru{last}.u_h"),
        "fc.w".to_string(),
        "fc.b".to_string(),
    ];
    let losses = [RegKind::None, RegKind::Mse, RegKind::Kl, RegKind::Moments];
    let mut worst: f64 = 0.0;
    for name in &check_params {
        let theta = model.params.get(name).unwrap().clone();
        for &reg in &losses {
            let err = grad_check(
                |tape, p| {
                    let ids = model
                        .params
                        .tensors()
                        .map(|(n, t)| {
                            let id = if n == name {
                                p
                            } else {
                                tape.constant(t.clone())
                            };
                            (n.to_string(), id)
                        })
                        .collect();
                    let bound =
                        BoundModel::from_parts(ids, model.layers, model.time_steps, model.hidden);
                    let g = tape.constant(gamma.clone());
                    let dn = tape.constant(d.clone());
                    let (gamma_hat, _) = decode_soft(tape, &bound, g, dn);
                    let c = tape.constant(labels.clone());
                    let gs = tape.constant(gamma_star.clone());
                    total_loss(tape, gamma_hat, c, Some(gs), reg, 0.5, 0.95)
                },
                &theta,
                eps,
            );
            worst = worst.max(err);
        }
    }
    worst
}

/// Mean and unbiased variance over all elements.
pub fn moments(x: &Array2<f64>) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.mapv(|v| (v - mean) * (v - mean)).sum() / (n - 1.0);
    (mean, var)
}

/// Mean absolute value per batch, convenience for the moments diagnostics.
pub fn abs_moments(x: &Array2<f64>) -> (f64, f64) {
    moments(&x.mapv(f64::abs))
}

/// Stack LLR vectors as columns.
pub fn columns_from_vecs(vecs: &[Vec<f64>]) -> Array2<f64> {
    let n = vecs[0].len();
    let mut m = Array2::zeros((n, vecs.len()));
    for (b, v) in vecs.iter().enumerate() {
        for (i, &x) in v.iter().enumerate() {
            m[[i, b]] = x;
        }
    }
    m
}

/// Column b of a matrix as a Vec.
pub fn column_vec(m: &Array2<f64>, b: usize) -> Vec<f64> {
    m.index_axis(Axis(1), b).to_vec()
}
