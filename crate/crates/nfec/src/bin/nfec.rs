//! Command-line front end: training, fine-tuning, Monte-Carlo simulation,
//! soft-output diagnostics, and code construction utilities.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use nfec::channel::{esn0_db_to_sigma2, RngStream};
use nfec::config::{Config, DecoderChoice};
use nfec::decoders::{map_bitwise_enum, map_bitwise_trellis};
use nfec::gf2::{build_code, coset_leader_table, make_systematic, CodeSpec, LinearCode};
use nfec::nn::{pipeline_grad_check, DecoderModel};
use nfec::sim::{
    hist_csv, histogram, sim_csv, simulate, simulate_tpc, soft_stats, soft_stats_csv, svg_curves,
    tpc_sim_csv, BpFrameDecoder, ChaseFrameDecoder, FrameDecoder, MapFrameDecoder,
    NeuralFrameDecoder, StopRule, SyndromeTableFrameDecoder,
};
use nfec::tpc::{
    tpc_finetune, ChasePyndiahComponent, MapComponent, NeuralComponent, SoftDecoder, TpcCode,
};
use nfec::train::{finetune_map, load_checkpoint, sample_batch, save_checkpoint, train};
use nfec::{Error, Result};

#[derive(Parser)]
#[command(name = "nfec", version, about = "Forward-error-correction workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the configured code and report its parameters.
    MakeCode {
        #[arg(long)]
        config: PathBuf,
        /// Write the parity-check matrix in alist format.
        #[arg(long)]
        alist_out: Option<PathBuf>,
    },
    /// BCE-phase training of the noise-estimation model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Resume from an existing checkpoint instead of fresh weights.
        #[arg(long)]
        ckpt_in: Option<PathBuf>,
    },
    /// MAP-regularized fine-tuning of a trained model.
    FinetuneMap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Joint fine-tuning of the model and extrinsic scales in the TPC loop.
    TpcFinetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Monte-Carlo BER/FER over the configured SNR grid.
    SimBer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Monte-Carlo TPC FER.
    SimTpc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Soft-output distribution statistics versus the MAP reference.
    SoftStats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 512)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histograms of decoder and MAP output LLRs.
    Hist {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 512)]
        frames: usize,
        #[arg(long, default_value_t = 60)]
        bins: usize,
        #[arg(long, default_value_t = -10.0)]
        lo: f64,
        #[arg(long, default_value_t = 30.0)]
        hi: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Cross-check the two exact MAP implementations on random LLR vectors.
    MapCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        vectors: usize,
    },
    /// Finite-difference check of the training gradients on a toy model.
    GradCheck,
}

fn load_config(path: &Path) -> Result<Config> {
    Config::from_json(&std::fs::read_to_string(path)?)
}

fn config_code(cfg: &Config) -> CodeSpec {
    cfg.code.clone().unwrap_or(CodeSpec::Hamming { m: 3 })
}

fn build_model(cfg: &Config, code: Arc<LinearCode>, spec: CodeSpec) -> Result<DecoderModel> {
    let mut rng = RngStream::new(cfg.model.seed, 0);
    DecoderModel::new(
        code,
        spec,
        cfg.model.layers,
        cfg.model.time_steps,
        cfg.model.hidden,
        &mut rng,
    )
}

fn frame_decoder(
    cfg: &Config,
    code: &Arc<LinearCode>,
    ckpt: Option<&PathBuf>,
) -> Result<Box<dyn FrameDecoder>> {
    Ok(match cfg.sim.decoder {
        DecoderChoice::Map => Box::new(MapFrameDecoder(code.clone())),
        DecoderChoice::Bp => Box::new(BpFrameDecoder {
            code: code.clone(),
            iters: cfg.sim.bp_iters,
        }),
        DecoderChoice::SyndromeTable => Box::new(SyndromeTableFrameDecoder {
            code: code.clone(),
            table: coset_leader_table(code, cfg.sim.table_t)?,
        }),
        DecoderChoice::ChasePyndiah => Box::new(ChaseFrameDecoder {
            code: code.clone(),
            table: coset_leader_table(code, cfg.sim.table_t)?,
            p: cfg.sim.chase_p,
        }),
        DecoderChoice::Neural => {
            let path =
                ckpt.ok_or_else(|| Error::Config("sim.decoder = neural requires --ckpt".into()))?;
            Box::new(NeuralFrameDecoder(Arc::new(load_checkpoint(path, None)?)))
        }
    })
}

/// Build a component code, forcing the systematic form TPC needs.
fn systematic_code(spec: &CodeSpec) -> Result<Arc<LinearCode>> {
    let code = build_code(spec)?;
    Ok(Arc::new(if code.is_systematic() {
        code
    } else {
        make_systematic(&code)?
    }))
}

fn tpc_from_config(cfg: &Config) -> Result<TpcCode> {
    let base = config_code(cfg);
    let col = systematic_code(cfg.tpc.col_code.as_ref().unwrap_or(&base))?;
    let row = systematic_code(cfg.tpc.row_code.as_ref().unwrap_or(&base))?;
    TpcCode::new(col, row)
}

fn tpc_component(
    cfg: &Config,
    code: &Arc<LinearCode>,
    ckpt: Option<&PathBuf>,
) -> Result<Box<dyn SoftDecoder>> {
    Ok(match cfg.tpc.decoder {
        DecoderChoice::Map => Box::new(MapComponent(code.clone())),
        DecoderChoice::ChasePyndiah => Box::new(ChasePyndiahComponent {
            code: code.clone(),
            table: coset_leader_table(code, cfg.sim.table_t)?,
            p: cfg.sim.chase_p,
        }),
        DecoderChoice::Neural => {
            let path =
                ckpt.ok_or_else(|| Error::Config("tpc.decoder = neural requires --ckpt".into()))?;
            Box::new(NeuralComponent(Arc::new(load_checkpoint(path, None)?)))
        }
        other => {
            return Err(Error::Config(format!(
                "tpc.decoder {other:?} is not a soft-in/soft-out component"
            )))
        }
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::MakeCode { config, alist_out } => {
            let cfg = load_config(&config)?;
            let spec = config_code(&cfg);
            let code = build_code(&spec)?;
            println!(
                "{}: n={} k={} rate={:.4} systematic={}",
                code.name,
                code.n,
                code.k,
                code.k as f64 / code.n as f64,
                code.is_systematic()
            );
            if let Some(path) = alist_out {
                write(&path, &nfec::gf2::alist::write_alist(&code.h))?;
                println!("wrote {}", path.display());
            }
        }
        Cmd::Train {
            config,
            out_dir,
            ckpt_in,
        } => {
            let cfg = load_config(&config)?;
            let spec = config_code(&cfg);
            // train on the systematic form so the checkpoint is usable as a
            // product-code component as well
            let code = systematic_code(&spec)?;
            let mut model = match ckpt_in {
                Some(path) => load_checkpoint(&path, Some(&spec))?,
                None => build_model(&cfg, code, spec)?,
            };
            let mut train_cfg = cfg.train.clone();
            train_cfg.checkpoint_dir = Some(out_dir.join("checkpoints"));
            let history = train(&mut model, &train_cfg)?;
            save_checkpoint(&model, &out_dir.join("model.ckpt"))?;
            write(
                &out_dir.join("train_history.csv"),
                &history.to_csv(&train_cfg.val_esn0_db),
            )?;
            println!(
                "trained {} epochs, final loss {:.6}",
                history.epochs.len(),
                history.epochs.last().map_or(f64::NAN, |e| e.loss)
            );
        }
        Cmd::FinetuneMap {
            config,
            ckpt,
            out_dir,
        } => {
            let cfg = load_config(&config)?;
            let spec = config_code(&cfg);
            let mut model = load_checkpoint(&ckpt, Some(&spec))?;
            let mut train_cfg = cfg.train.clone();
            train_cfg.checkpoint_dir = Some(out_dir.join("checkpoints"));
            let history = finetune_map(&mut model, &train_cfg)?;
            save_checkpoint(&model, &out_dir.join("model.ckpt"))?;
            write(
                &out_dir.join("finetune_history.csv"),
                &history.to_csv(&train_cfg.val_esn0_db),
            )?;
            println!("fine-tuned {} epochs", history.epochs.len());
        }
        Cmd::TpcFinetune {
            config,
            ckpt,
            out_dir,
        } => {
            let cfg = load_config(&config)?;
            let spec = config_code(&cfg);
            let tpc = tpc_from_config(&cfg)?;
            let mut model = load_checkpoint(&ckpt, None)?;
            if model.code.n != tpc.n1() {
                return Err(Error::Config(format!(
                    "checkpoint code length {} does not match tpc component {}",
                    model.code.n,
                    tpc.n1()
                )));
            }
            let _ = spec;
            let (alpha_c, alpha_r, losses) = tpc_finetune(&mut model, &tpc, &cfg.tpc.finetune)?;
            save_checkpoint(&model, &out_dir.join("model.ckpt"))?;
            let mut alpha_csv = String::from("iteration,alpha_c,alpha_r\n");
            for (i, (ac, ar)) in alpha_c.iter().zip(&alpha_r).enumerate() {
                alpha_csv.push_str(&format!("{i},{ac:.10e},{ar:.10e}\n"));
            }
            write(&out_dir.join("alphas.csv"), &alpha_csv)?;
            let mut loss_csv = String::from("epoch,loss\n");
            for (i, l) in losses.iter().enumerate() {
                loss_csv.push_str(&format!("{i},{l:.10e}\n"));
            }
            write(&out_dir.join("tpc_finetune_history.csv"), &loss_csv)?;
            println!("alpha_c = {alpha_c:?}");
            println!("alpha_r = {alpha_r:?}");
        }
        Cmd::SimBer {
            config,
            seed,
            ckpt,
            out,
            svg,
        } => {
            let cfg = load_config(&config)?;
            let spec = config_code(&cfg);
            // the systematic form, matching what `train` checkpoints expect
            let code = systematic_code(&spec)?;
            let decoder = frame_decoder(&cfg, &code, ckpt.as_ref())?;
            let stop = StopRule {
                max_frames: cfg.sim.max_frames,
                target_frame_errors: cfg.sim.target_frame_errors,
            };
            let points = simulate(
                &code,
                decoder.as_ref(),
                &cfg.sim.esn0_db,
                &stop,
                seed.unwrap_or(cfg.sim.seed),
            )?;
            write(&out, &sim_csv(&points))?;
            if let Some(path) = svg {
                let series = vec![(
                    decoder.label().to_string(),
                    points.iter().map(|p| (p.esn0_db, p.ber)).collect(),
                )];
                write(&path, &svg_curves(&format!("BER, {}", code.name), &series))?;
            }
            for p in &points {
                println!(
                    "esn0 {:>5.2} dB: ber {:.3e}, fer {:.3e} ({} frames)",
                    p.esn0_db, p.ber, p.fer, p.frames
                );
            }
        }
        Cmd::SimTpc {
            config,
            seed,
            ckpt,
            out,
        } => {
            let cfg = load_config(&config)?;
            let tpc = tpc_from_config(&cfg)?;
            let d_c = tpc_component(&cfg, &tpc.col_code, ckpt.as_ref())?;
            let d_r = tpc_component(&cfg, &tpc.row_code, ckpt.as_ref())?;
            let n = cfg.tpc.finetune.n_iters;
            let alpha_c = cfg
                .tpc
                .alpha_c
                .clone()
                .unwrap_or(vec![cfg.tpc.finetune.alpha_init; n]);
            let alpha_r = cfg
                .tpc
                .alpha_r
                .clone()
                .unwrap_or(vec![cfg.tpc.finetune.alpha_init; n]);
            let stop = StopRule {
                max_frames: cfg.sim.max_frames,
                target_frame_errors: cfg.sim.target_frame_errors,
            };
            let points = simulate_tpc(
                &tpc,
                d_c.as_ref(),
                d_r.as_ref(),
                &alpha_c,
                &alpha_r,
                n,
                &cfg.sim.esn0_db,
                &stop,
                seed.unwrap_or(cfg.sim.seed),
            )?;
            write(&out, &tpc_sim_csv(&points))?;
            for p in &points {
                println!(
                    "esn0 {:>5.2} dB: fer {:.3e} ({} frames)",
                    p.esn0_db, p.fer, p.frames
                );
            }
        }
        Cmd::SoftStats {
            config,
            ckpt,
            frames,
            out,
        } => {
            let cfg = load_config(&config)?;
            let spec = config_code(&cfg);
            let model = load_checkpoint(&ckpt, Some(&spec))?;
            let mut rng = RngStream::new(cfg.sim.seed, 30);
            let esn0 = cfg.channel.esn0_db;
            let batch = sample_batch(&model.code, frames, [esn0, esn0], &mut rng, true)?;
            let hat = model.decode_llr_batch(&batch.gamma);
            let rows = soft_stats(&hat, batch.gamma_star.as_ref().unwrap());
            write(&out, &soft_stats_csv(&rows))?;
            for r in &rows {
                println!(
                    "{:<11} mean {:>10.4} var {:>10.4} kl {:>10.4} mse {:>10.4}",
                    r.basis, r.mean, r.var, r.kl, r.mse
                );
            }
        }
        Cmd::Hist {
            config,
            ckpt,
            frames,
            bins,
            lo,
            hi,
            out_dir,
        } => {
            let cfg = load_config(&config)?;
            let spec = config_code(&cfg);
            let model = load_checkpoint(&ckpt, Some(&spec))?;
            let mut rng = RngStream::new(cfg.sim.seed, 31);
            let esn0 = cfg.channel.esn0_db;
            let batch = sample_batch(&model.code, frames, [esn0, esn0], &mut rng, true)?;
            let hat = model.decode_llr_batch(&batch.gamma);
            let star = batch.gamma_star.as_ref().unwrap();
            for (name, data) in [("gamma_hat", &hat), ("gamma_star", star)] {
                let samples: Vec<f64> = data.iter().copied().collect();
                let (edges, counts) = histogram(&samples, bins, (lo, hi))?;
                write(
                    &out_dir.join(format!("{name}_hist.csv")),
                    &hist_csv(&edges, &counts),
                )?;
            }
            println!("wrote gamma_hat_hist.csv and gamma_star_hist.csv");
        }
        Cmd::MapCheck { config, vectors } => {
            let cfg = load_config(&config)?;
            let spec = config_code(&cfg);
            let code = build_code(&spec)?;
            let mut rng = RngStream::new(cfg.sim.seed, 32);
            let sigma2 = esn0_db_to_sigma2(cfg.channel.esn0_db);
            let mut max_diff: f64 = 0.0;
            for _ in 0..vectors {
                let gamma: Vec<f64> = (0..code.n)
                    .map(|_| 2.0 * (1.0 + sigma2.sqrt() * rng.gaussian()) / sigma2)
                    .collect();
                let a = map_bitwise_enum(&code, &gamma)?;
                let b = map_bitwise_trellis(&code, &gamma)?;
                for (x, y) in a.iter().zip(&b) {
                    max_diff = max_diff.max((x - y).abs());
                }
            }
            println!(
                "map-check {}: max abs diff {max_diff:.3e} over {vectors} vectors",
                code.name
            );
            if max_diff > 1e-9 {
                return Err(Error::GuardViolation(format!(
                    "MAP implementations disagree: {max_diff:.3e}"
                )));
            }
        }
        Cmd::GradCheck => {
            let code = Arc::new(build_code(&CodeSpec::Hamming { m: 3 })?);
            let mut rng = RngStream::new(99, 0);
            let model =
                DecoderModel::new(code, CodeSpec::Hamming { m: 3 }, 2, 2, Some(8), &mut rng)?;
            let err = pipeline_grad_check(&model, 1e-5);
            println!("grad-check: max rel err {err:.3e}");
            if err > 1e-5 {
                return Err(Error::GuardViolation(format!(
                    "gradient mismatch: {err:.3e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version requests are successes, anything else is usage
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
