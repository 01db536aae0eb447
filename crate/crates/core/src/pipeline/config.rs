//! Run configuration: TOML on disk, validated on load, hashed into every
//! checkpoint.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::train::MlSettings;
use crate::abstractor::AbstractorConfig;
use crate::corpus::SynthConfig;
use crate::decoding::DecodeConfig;
use crate::error::{Error, Result};
use crate::extractor::ExtractorConfig;
use crate::rl::{RlConfig, MAX_STEPS_CAP};

/// Environment variable overriding [`RunConfig::seed`].
pub const SEED_ENV: &str = "SUMM_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// JSONL corpus; ignored when `synthetic` is set.
    pub corpus: Option<PathBuf>,
    pub synthetic: Option<SynthConfig>,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub vocab_cap: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            synthetic: None,
            val_fraction: 0.1,
            test_fraction: 0.1,
            vocab_cap: 30_000,
            max_src_len: 100,
            max_tgt_len: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub hidden: usize,
    pub conv_filters: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            emb_dim: 128,
            hidden: 256,
            conv_filters: 100,
        }
    }
}

impl ModelConfig {
    pub fn extractor(&self, vocab_size: usize) -> ExtractorConfig {
        ExtractorConfig {
            vocab_size,
            emb_dim: self.emb_dim,
            conv_filters: self.conv_filters,
            hidden: self.hidden,
        }
    }

    pub fn abstractor(&self, vocab_size: usize) -> AbstractorConfig {
        AbstractorConfig {
            vocab_size,
            emb_dim: self.emb_dim,
            hidden: self.hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Sentences taken by ML-trained extractors; 0 tunes it on validation.
    pub k: usize,
    /// Largest count tried when tuning `k`.
    pub max_k: usize,
    /// Cap on sentences selected by a stopping extractor.
    pub cap: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            k: 0,
            max_k: 6,
            cap: MAX_STEPS_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlSection {
    pub gamma: f64,
    pub lr: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub updates: usize,
    pub log_every: usize,
    pub eval_every: usize,
    pub standardize: bool,
}

impl Default for RlSection {
    fn default() -> Self {
        let d = RlConfig::default();
        Self {
            gamma: d.gamma,
            lr: d.lr,
            clip: d.clip,
            batch_size: d.batch_size,
            updates: d.updates,
            log_every: d.log_every,
            eval_every: d.eval_every,
            standardize: d.standardize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Threads used for rewriting sentences.
    pub workers: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optim: MlSettings,
    pub rl: RlSection,
    pub decode: DecodeConfig,
    pub extract: ExtractConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 1,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            optim: MlSettings::default(),
            rl: RlSection::default(),
            decode: DecodeConfig::default(),
            extract: ExtractConfig::default(),
        }
    }
}

impl RunConfig {
    /// Scaled-down model and schedule for the synthetic benchmark corpus
    /// (2000 documents, 200 words) on a single CPU core.
    pub fn desk() -> Self {
        Self {
            data: DataConfig {
                synthetic: Some(SynthConfig {
                    n_docs: 2000,
                    vocab_size: 200,
                    sents_per_doc: 10,
                    salient_per_doc: 3,
                    noise_rate: 0.2,
                    seed: 1,
                }),
                ..DataConfig::default()
            },
            model: ModelConfig {
                emb_dim: 64,
                hidden: 64,
                conv_filters: 64,
            },
            optim: MlSettings {
                max_epochs: 8,
                ..MlSettings::default()
            },
            rl: RlSection {
                lr: 2e-4,
                updates: 600,
                eval_every: 50,
                ..RlSection::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, validates and applies the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.apply_seed_override(&v)?;
        }
        Ok(())
    }

    pub fn apply_seed_override(&mut self, value: &str) -> Result<()> {
        self.seed = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{value}` is not an unsigned integer")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let d = &self.data;
        if !(0.0..1.0).contains(&d.val_fraction) || !(0.0..1.0).contains(&d.test_fraction) || d.val_fraction + d.test_fraction >= 1.0 {
            return bad("data: val_fraction and test_fraction must lie in [0, 1) and sum below 1");
        }
        if d.vocab_cap < 4 || d.max_src_len == 0 || d.max_tgt_len == 0 {
            return bad("data: vocab_cap must be at least 4 and lengths positive");
        }
        let m = &self.model;
        if m.emb_dim == 0 || m.hidden == 0 || m.conv_filters == 0 {
            return bad("model: sizes must be positive");
        }
        let o = &self.optim;
        if !(o.lr > 0.0) || o.batch_size == 0 || !(o.clip > 0.0) || o.max_epochs == 0 {
            return bad("optim: lr, clip, batch_size and max_epochs must be positive");
        }
        let r = &self.rl;
        if !(0.0..=1.0).contains(&r.gamma) || !(r.lr > 0.0) || !(r.clip > 0.0) || r.batch_size == 0 || r.log_every == 0 {
            return bad("rl: gamma in [0, 1]; lr, clip, batch_size, log_every positive");
        }
        let dc = &self.decode;
        if dc.beam == 0 || dc.max_len == 0 || dc.ngram == 0 || dc.diversity < 0.0 || dc.rerank_cap == 0 {
            return bad("decode: beam, max_len, ngram, rerank_cap positive; diversity non-negative");
        }
        if self.extract.cap == 0 || self.extract.max_k == 0 {
            return bad("extract: cap and max_k must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn rl_config(&self) -> RlConfig {
        let r = &self.rl;
        RlConfig {
            gamma: r.gamma,
            lr: r.lr,
            clip: r.clip,
            batch_size: r.batch_size,
            updates: r.updates,
            max_steps_cap: self.extract.cap,
            log_every: r.log_every,
            eval_every: r.eval_every,
            standardize: r.standardize,
            seed: self.sub_seed(4),
        }
    }

    /// Independent seed for pipeline component `k`.
    pub fn sub_seed(&self, k: u64) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::desk();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "seed = 3\n[data]\ncorpus = \"x.jsonl\"\nbogus = 1\n";
        assert!(RunConfig::from_toml(text).is_err());
        assert!(RunConfig::from_toml("sed = 3\n[data]\ncorpus = \"x.jsonl\"\n").is_err());
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = RunConfig::from_toml("seed = 9\n[data]\ncorpus = \"x.jsonl\"\n[rl]\ngamma = 0.9\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.rl.gamma, 0.9);
        assert_eq!(cfg.rl.lr, 1e-4);
        assert_eq!(cfg.model.hidden, 256);
        assert_eq!(cfg.decode.beam, 5);
        assert_eq!(cfg.decode.ngram, 2);
    }

    #[test]
    fn validation_errors() {
        assert!(RunConfig::from_toml("seed = 1\n").is_ok());
        assert!(RunConfig::from_toml("workers = 0\n").is_err());
        assert!(RunConfig::from_toml("[data]\ncorpus = \"x\"\nval_fraction = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[data]\ncorpus = \"x\"\n[rl]\ngamma = 2.0\n").is_err());
    }

    #[test]
    fn seed_override_and_hash() {
        let mut cfg = RunConfig::desk();
        let h = cfg.hash();
        assert_eq!(h, RunConfig::desk().hash());
        cfg.apply_seed_override("42").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_ne!(cfg.hash(), h);
        assert!(cfg.apply_seed_override("x").is_err());
        assert_ne!(cfg.sub_seed(1), cfg.sub_seed(2));
    }
}
