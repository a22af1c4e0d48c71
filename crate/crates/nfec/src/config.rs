//! JSON configuration: sections code / channel / model / train / tpc / sim,
//! with defaults matching the reference setup (hidden 5n, 4 layers, 5 time
//! steps, batch 2^13, lr 1e-3 down to 1e-6, alpha 0.7). Unknown keys are
//! rejected and range violations are reported with their key path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::CodeSpec;
use crate::tpc::TpcFinetuneConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub code: Option<CodeSpec>,
    pub channel: ChannelSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub tpc: TpcSection,
    pub sim: SimSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// Operating point for single-SNR commands (soft-stats, hist).
    pub esn0_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection { esn0_db: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub time_steps: usize,
    /// `None` means the 5n default.
    pub hidden: Option<usize>,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            layers: 4,
            time_steps: 5,
            hidden: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderChoice {
    Map,
    Bp,
    SyndromeTable,
    ChasePyndiah,
    Neural,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub esn0_db: Vec<f64>,
    pub max_frames: u64,
    pub target_frame_errors: u64,
    pub seed: u64,
    pub decoder: DecoderChoice,
    pub bp_iters: usize,
    pub chase_p: usize,
    /// Coset-table radius for the hard/Chase decoders.
    pub table_t: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            esn0_db: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            max_frames: 1_000_000,
            target_frame_errors: 100,
            seed: 1,
            decoder: DecoderChoice::Map,
            bp_iters: 50,
            chase_p: 3,
            table_t: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TpcSection {
    /// Component codes; `None` falls back to the top-level code (systematized
    /// when needed).
    pub row_code: Option<CodeSpec>,
    pub col_code: Option<CodeSpec>,
    pub finetune: TpcFinetuneConfig,
    /// Fixed extrinsic scales for plain TPC simulation; length n_iters.
    pub alpha_c: Option<Vec<f64>>,
    pub alpha_r: Option<Vec<f64>>,
    pub decoder: DecoderChoice,
}

impl Default for TpcSection {
    fn default() -> Self {
        TpcSection {
            row_code: None,
            col_code: None,
            finetune: TpcFinetuneConfig::default(),
            alpha_c: None,
            alpha_r: None,
            decoder: DecoderChoice::ChasePyndiah,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization")
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.layers == 0 {
            return Err(Error::Config("model.layers must be >= 1".into()));
        }
        if self.model.time_steps == 0 {
            return Err(Error::Config("model.time_steps must be >= 1".into()));
        }
        if self.model.hidden == Some(0) {
            return Err(Error::Config("model.hidden must be >= 1".into()));
        }
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        if self.sim.esn0_db.is_empty() {
            return Err(Error::Config("sim.esn0_db must not be empty".into()));
        }
        if self.sim.max_frames == 0 {
            return Err(Error::Config("sim.max_frames must be >= 1".into()));
        }
        if self.tpc.finetune.n_iters == 0 {
            return Err(Error::Config("tpc.finetune.n_iters must be >= 1".into()));
        }
        if self.tpc.finetune.batch == 0 {
            return Err(Error::Config("tpc.finetune.batch must be >= 1".into()));
        }
        if self.tpc.finetune.esn0_range_db[0] > self.tpc.finetune.esn0_range_db[1] {
            return Err(Error::Config(
                "tpc.finetune.esn0_range_db: low > high".into(),
            ));
        }
        for (key, alphas) in [
            ("tpc.alpha_c", &self.tpc.alpha_c),
            ("tpc.alpha_r", &self.tpc.alpha_r),
        ] {
            if let Some(a) = alphas {
                if a.len() != self.tpc.finetune.n_iters {
                    return Err(Error::Config(format!(
                        "{key} must have length tpc.finetune.n_iters"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = Config::from_json("{}").unwrap();
        assert_eq!(cfg.model.layers, 4);
        assert_eq!(cfg.model.time_steps, 5);
        assert_eq!(cfg.model.hidden, None);
        assert_eq!(cfg.train.batch_size, 1 << 13);
        assert_eq!(cfg.train.lr_init, 1e-3);
        assert_eq!(cfg.train.lr_floor, 1e-6);
        assert_eq!(cfg.tpc.finetune.alpha_init, 0.7);
        assert_eq!(cfg.tpc.finetune.epochs, 4000);
        assert_eq!(cfg.tpc.finetune.batch, 256);
    }

    #[test]
    fn empty_model_section_uses_defaults() {
        let cfg = Config::from_json(r#"{"model": {}}"#).unwrap();
        assert_eq!(cfg.model.layers, 4);
        assert_eq!(cfg.model.time_steps, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_json(r#"{"modle": {}}"#).is_err());
        assert!(Config::from_json(r#"{"model": {"layerss": 3}}"#).is_err());
    }

    #[test]
    fn reversed_esn0_range_rejected() {
        let err = Config::from_json(r#"{"train": {"esn0_range_db": [5.0, 1.0]}}"#).unwrap_err();
        assert!(err.to_string().contains("esn0_range_db"));
    }

    #[test]
    fn roundtrip() {
        let mut cfg = Config {
            code: Some(CodeSpec::Bch { m: 4, t: 2 }),
            ..Config::default()
        };
        cfg.sim.esn0_db = vec![1.0, 2.5];
        let again = Config::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn alpha_length_validated() {
        let err = Config::from_json(r#"{"tpc": {"alpha_c": [0.5], "finetune": {"n_iters": 2}}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("alpha_c"));
    }
}
