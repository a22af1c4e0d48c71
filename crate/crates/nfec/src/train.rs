//! Zero-codeword batch generation, the two-phase training loop (BCE first,
//! then MAP-referenced fine-tuning), and the self-describing checkpoint
//! format.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, ReduceOnPlateau, Tape, Tensor};
use crate::channel::{esn0_db_to_sigma2, RngStream};
use crate::decoders::{map_bitwise_enum, map_bitwise_trellis};
use crate::error::{Error, Result};
use crate::gf2::{build_code, make_systematic, CodeSpec, LinearCode};
use crate::nn::{bce_loss, build_feature_matrix, decode_soft, total_loss, DecoderModel, RegKind};

pub const MAP_ENUM_MAX_K: usize = 20;
pub const MAP_TRELLIS_MAX_R: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub esn0_range_db: [f64; 2],
    pub lr_init: f64,
    pub lr_floor: f64,
    pub epochs_bce: usize,
    pub epochs_reg: usize,
    pub steps_per_epoch: usize,
    pub reg_kind: RegKind,
    pub alpha_reg: f64,
    pub rho: f64,
    pub seed: u64,
    pub val_esn0_db: Vec<f64>,
    pub val_batch: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1 << 13,
            esn0_range_db: [0.0, 6.0],
            lr_init: 1e-3,
            lr_floor: 1e-6,
            epochs_bce: 1,
            epochs_reg: 0,
            steps_per_epoch: 100,
            reg_kind: RegKind::Moments,
            alpha_reg: 0.1,
            rho: 0.95,
            seed: 1,
            val_esn0_db: vec![0.0, 2.0, 4.0, 6.0],
            val_batch: 1 << 10,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.esn0_range_db[0] > self.esn0_range_db[1] {
            return Err(Error::Config("train.esn0_range_db: low > high".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if self.lr_floor > self.lr_init {
            return Err(Error::Config("train.lr_floor exceeds lr_init".into()));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::Config("train.steps_per_epoch must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// BCE component of the loss; equals `loss` during the BCE phase.
    pub bce_term: f64,
    /// Regularizer component (already scaled by alpha); zero in the BCE phase.
    pub reg_term: f64,
    pub val_bce: Vec<f64>,
    pub lr: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Wall time stays out of the CSV so runs are byte-reproducible.
    pub fn to_csv(&self, val_esn0_db: &[f64]) -> String {
        let mut s = String::from("epoch,loss,bce_term,reg_term");
        for e in val_esn0_db {
            s.push_str(&format!(",val_bce@{e}dB"));
        }
        s.push_str(",lr\n");
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{:.10e},{:.10e},{:.10e}",
                r.epoch, r.loss, r.bce_term, r.reg_term
            ));
            for v in &r.val_bce {
                s.push_str(&format!(",{v:.10e}"));
            }
            s.push_str(&format!(",{:.3e}\n", r.lr));
        }
        s
    }
}

/// One generated batch: channel LLR columns, all-zero labels, and the MAP
/// reference when requested.
pub struct Batch {
    pub gamma: Array2<f64>,
    pub labels: Array2<f64>,
    pub gamma_star: Option<Array2<f64>>,
}

/// Bitwise-MAP reference with automatic method choice: codebook enumeration
/// for small k, syndrome trellis for small n-k.
pub fn map_reference(code: &LinearCode, gamma: &[f64]) -> Result<Vec<f64>> {
    if code.k <= MAP_ENUM_MAX_K {
        map_bitwise_enum(code, gamma)
    } else if code.n - code.k <= MAP_TRELLIS_MAX_R {
        map_bitwise_trellis(code, gamma)
    } else {
        Err(Error::GuardViolation(format!(
            "no MAP oracle for [{}, {}]: k > {MAP_ENUM_MAX_K} and n-k > {MAP_TRELLIS_MAX_R}",
            code.n, code.k
        )))
    }
}

/// Draw a zero-codeword batch: per frame, Es/N0 uniform over the configured
/// range, all-ones BPSK through AWGN, LLR conversion.
pub fn sample_batch(
    code: &LinearCode,
    batch_size: usize,
    esn0_range_db: [f64; 2],
    rng: &mut RngStream,
    want_map: bool,
) -> Result<Batch> {
    let n = code.n;
    let mut gamma = Array2::zeros((n, batch_size));
    let mut gamma_star = want_map.then(|| Array2::zeros((n, batch_size)));
    for b in 0..batch_size {
        let esn0 = if esn0_range_db[0] == esn0_range_db[1] {
            esn0_range_db[0]
        } else {
            rng.uniform_in(esn0_range_db[0], esn0_range_db[1])
        };
        let sigma2 = esn0_db_to_sigma2(esn0);
        let sigma = sigma2.sqrt();
        let col: Vec<f64> = (0..n)
            .map(|_| 2.0 * (1.0 + sigma * rng.gaussian()) / sigma2)
            .collect();
        for (i, &g) in col.iter().enumerate() {
            gamma[[i, b]] = g;
        }
        if let Some(gs) = gamma_star.as_mut() {
            for (i, g) in map_reference(code, &col)?.into_iter().enumerate() {
                gs[[i, b]] = g;
            }
        }
    }
    Ok(Batch {
        gamma,
        labels: Array2::zeros((n, batch_size)),
        gamma_star,
    })
}

/// Loss and gradient of one batch; regularized when the batch carries a MAP
/// reference. Returns (total, bce_term, reg_term, grads).
fn batch_step(
    model: &DecoderModel,
    batch: &Batch,
    reg_kind: RegKind,
    alpha_reg: f64,
    rho: f64,
) -> (f64, f64, f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let (prepared, _) = model.prepare_input(&batch.gamma);
    let d = build_feature_matrix(&model.code, &prepared);
    let d_node = tape.constant(d);
    let g_node = tape.constant(prepared);
    let (gamma_hat, _) = decode_soft(&mut tape, &bound, g_node, d_node);
    let labels = tape.constant(batch.labels.clone());
    let bce = bce_loss(&mut tape, gamma_hat, labels);
    let (loss, bce_val, reg_val) = match (&batch.gamma_star, reg_kind) {
        (Some(gs), kind) if kind != RegKind::None => {
            let gs_node = tape.constant(gs.clone());
            let total = total_loss(
                &mut tape,
                gamma_hat,
                labels,
                Some(gs_node),
                kind,
                alpha_reg,
                rho,
            );
            let t = tape.scalar(total);
            let b = tape.scalar(bce);
            (total, b, t - b)
        }
        _ => (bce, tape.scalar(bce), 0.0),
    };
    let total_val = tape.scalar(loss);
    let grads = tape.backward(loss);
    (total_val, bce_val, reg_val, model.gradients(&bound, &grads))
}

/// Mean BCE of the model on a fresh zero-codeword batch at one SNR point.
pub fn validation_bce(
    model: &DecoderModel,
    esn0_db: f64,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let batch = sample_batch(&model.code, batch_size, [esn0_db, esn0_db], rng, false)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let (prepared, _) = model.prepare_input(&batch.gamma);
    let d = tape.constant(build_feature_matrix(&model.code, &prepared));
    let g = tape.constant(prepared);
    let (gamma_hat, _) = decode_soft(&mut tape, &bound, g, d);
    let labels = tape.constant(batch.labels.clone());
    let l = bce_loss(&mut tape, gamma_hat, labels);
    Ok(tape.scalar(l))
}

// rng stream ids: per-phase training data vs. validation data
const STREAM_TRAIN_BCE: u64 = 1;
const STREAM_TRAIN_REG: u64 = 2;
const STREAM_VAL: u64 = 3;

fn run_phase(
    model: &mut DecoderModel,
    cfg: &TrainConfig,
    epochs: usize,
    with_reg: bool,
    history: &mut TrainHistory,
) -> Result<()> {
    cfg.validate()?;
    if with_reg {
        if model.normalize {
            // the MAP reference is in raw channel units; a normalizing model's
            // outputs are not comparable to it
            return Err(Error::Config(
                "regularized training is not supported for normalizing models".into(),
            ));
        }
        // fail fast before the first full batch
        map_reference(&model.code, &vec![1.0; model.code.n])?;
    }
    let stream = if with_reg {
        STREAM_TRAIN_REG
    } else {
        STREAM_TRAIN_BCE
    };
    let mut data_rng = RngStream::new(cfg.seed, stream);
    let mut adam = AdamState::new(&model.params, cfg.lr_init);
    let mut sched = ReduceOnPlateau::new(cfg.lr_init, cfg.lr_floor);
    let epoch_base = history.epochs.len();
    for epoch in 0..epochs {
        let t0 = Instant::now();
        let mut loss_sum = 0.0;
        let mut bce_sum = 0.0;
        let mut reg_sum = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            let batch = sample_batch(
                &model.code,
                cfg.batch_size,
                cfg.esn0_range_db,
                &mut data_rng,
                with_reg && cfg.reg_kind != RegKind::None,
            )?;
            let (loss, bce, reg, grads) = if with_reg {
                batch_step(model, &batch, cfg.reg_kind, cfg.alpha_reg, cfg.rho)
            } else {
                batch_step(model, &batch, RegKind::None, 0.0, cfg.rho)
            };
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss {loss} at epoch {epoch}")));
            }
            adam.step(&mut model.params, &grads);
            loss_sum += loss;
            bce_sum += bce;
            reg_sum += reg;
        }
        // validation batches are re-drawn per epoch from a dedicated stream
        let mut val_rng = RngStream::new(cfg.seed, STREAM_VAL);
        let mut val_bce = Vec::with_capacity(cfg.val_esn0_db.len());
        for &esn0 in &cfg.val_esn0_db {
            val_bce.push(validation_bce(model, esn0, cfg.val_batch, &mut val_rng)?);
        }
        let val_mean = if val_bce.is_empty() {
            loss_sum / cfg.steps_per_epoch as f64
        } else {
            val_bce.iter().sum::<f64>() / val_bce.len() as f64
        };
        adam.lr = sched.observe(val_mean);
        let record = EpochRecord {
            epoch: epoch_base + epoch,
            loss: loss_sum / cfg.steps_per_epoch as f64,
            bce_term: bce_sum / cfg.steps_per_epoch as f64,
            reg_term: reg_sum / cfg.steps_per_epoch as f64,
            val_bce,
            lr: adam.lr,
            wall_secs: t0.elapsed().as_secs_f64(),
        };
        history.epochs.push(record);
        if let Some(dir) = &cfg.checkpoint_dir {
            let path = dir.join(format!("epoch_{:04}.ckpt", epoch_base + epoch));
            save_checkpoint(model, &path)?;
        }
    }
    Ok(())
}

/// BCE-only phase.
pub fn train(model: &mut DecoderModel, cfg: &TrainConfig) -> Result<TrainHistory> {
    if cfg.epochs_bce == 0 {
        return Err(Error::Config("train.epochs_bce must be >= 1".into()));
    }
    let mut history = TrainHistory::default();
    run_phase(model, cfg, cfg.epochs_bce, false, &mut history)?;
    Ok(history)
}

/// MAP-referenced fine-tuning phase.
pub fn finetune_map(model: &mut DecoderModel, cfg: &TrainConfig) -> Result<TrainHistory> {
    let mut history = TrainHistory::default();
    run_phase(model, cfg, cfg.epochs_reg.max(1), true, &mut history)?;
    Ok(history)
}

// ---------------------------------------------------------------------------
// checkpoint format: b"NFEC1" | u32 LE header length | JSON header |
// raw little-endian f32 payload, tensors in declared order, row-major
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 5] = b"NFEC1";

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: [usize; 2],
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    code: CodeSpec,
    /// The model was built on the systematic (column-permuted) form of the
    /// code; reconstruct the same form on load.
    #[serde(default)]
    systematic: bool,
    /// The model expects per-frame unit-mean-|LLR| inputs.
    #[serde(default)]
    normalize: bool,
    layers: usize,
    time_steps: usize,
    hidden: usize,
    tensors: Vec<TensorMeta>,
}

pub fn checkpoint_bytes(model: &DecoderModel) -> Vec<u8> {
    let header = CheckpointHeader {
        code: model.code_spec.clone(),
        systematic: model.code.is_systematic(),
        normalize: model.normalize,
        layers: model.layers,
        time_steps: model.time_steps,
        hidden: model.hidden,
        tensors: model
            .params
            .tensors()
            .map(|(name, t)| TensorMeta {
                name: name.to_string(),
                shape: [t.nrows(), t.ncols()],
                dtype: "f32".to_string(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serialization");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, t) in model.params.tensors() {
        for &x in t.iter() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(model: &DecoderModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&checkpoint_bytes(model))?;
    Ok(())
}

/// Decode a checkpoint back into a model. When `expected_code` is given, the
/// embedded code spec must match it.
pub fn model_from_bytes(bytes: &[u8], expected_code: Option<&CodeSpec>) -> Result<DecoderModel> {
    let fail = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < MAGIC.len() + 4 {
        return Err(fail("truncated header"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(fail("bad magic"));
    }
    let mut len_bytes = [0u8; 4];
    len_bytes.copy_from_slice(&bytes[MAGIC.len()..MAGIC.len() + 4]);
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let body_start = MAGIC.len() + 4;
    if bytes.len() < body_start + header_len {
        return Err(fail("truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[body_start..body_start + header_len])
            .map_err(|e| Error::Checkpoint(format!("header parse: {e}")))?;
    if let Some(expected) = expected_code {
        if *expected != header.code {
            return Err(fail(
                "checkpoint code spec does not match the requested code",
            ));
        }
    }
    let mut code = build_code(&header.code)?;
    if header.systematic && !code.is_systematic() {
        code = make_systematic(&code)?;
    }
    let code = Arc::new(code);
    let mut rng = RngStream::new(0, 0);
    let mut model = DecoderModel::new(
        code,
        header.code.clone(),
        header.layers,
        header.time_steps,
        Some(header.hidden),
        &mut rng,
    )?;
    model.normalize = header.normalize;
    let mut offset = body_start + header_len;
    if header.tensors.len() != model.params.len() {
        return Err(fail("tensor count mismatch"));
    }
    for meta in &header.tensors {
        let t = model
            .params
            .get_mut(&meta.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {}", meta.name)))?;
        if meta.dtype != "f32" {
            return Err(fail("unsupported element type"));
        }
        if [t.nrows(), t.ncols()] != meta.shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} shape {:?} does not match model {:?}",
                meta.name,
                meta.shape,
                [t.nrows(), t.ncols()]
            )));
        }
        let count = meta.shape[0] * meta.shape[1];
        if bytes.len() < offset + 4 * count {
            return Err(fail("truncated payload"));
        }
        for x in t.iter_mut() {
            let mut b = [0u8; 4];
            b.copy_from_slice(&bytes[offset..offset + 4]);
            *x = f32::from_le_bytes(b) as f64;
            offset += 4;
        }
    }
    if offset != bytes.len() {
        return Err(fail("trailing bytes after payload"));
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path, expected_code: Option<&CodeSpec>) -> Result<DecoderModel> {
    model_from_bytes(&std::fs::read(path)?, expected_code)
}
