//! Saving and loading trained models as checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use crate::abstractor::{Abstractor, AbstractorConfig};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::extractor::{AnyExtractor, Extractor, ExtractorConfig, FfExtractor};
use crate::rl::ActorCritic;
use crate::substrate::{Checkpoint, OptimState, ParamSet};

pub const KIND_ABSTRACTOR: &str = "abstractor";
pub const KIND_RNN_EXT: &str = "rnn-ext";
pub const KIND_FF_EXT: &str = "ff-ext";
pub const KIND_RL: &str = "rl";

/// Fields every checkpoint written by the pipeline shares.
#[derive(Debug, Clone)]
pub struct SaveInfo<'a> {
    pub config_hash: &'a str,
    pub vocab: &'a Vocabulary,
    pub optimizer: Option<OptimState>,
    pub meta: BTreeMap<String, Value>,
}

fn write(path: &Path, kind: &str, config: Value, params: &ParamSet, info: SaveInfo<'_>) -> Result<()> {
    Checkpoint {
        kind: kind.to_string(),
        config_hash: info.config_hash.to_string(),
        config,
        vocab: Some(info.vocab.tokens().to_vec()),
        params: params.clone(),
        optimizer: info.optimizer,
        meta: info.meta,
    }
    .save(path)
}

pub fn save_abstractor(path: &Path, abs: &Abstractor, info: SaveInfo<'_>) -> Result<()> {
    write(path, KIND_ABSTRACTOR, json!(abs.config), &abs.params, info)
}

/// Writes an ML-trained extractor; `k` is the tuned extraction count.
pub fn save_extractor(path: &Path, ext: &AnyExtractor, k: usize, mut info: SaveInfo<'_>) -> Result<()> {
    info.meta.insert("k".into(), json!(k));
    match ext {
        AnyExtractor::Rnn(m) => write(path, KIND_RNN_EXT, json!(m.config), &m.params, info),
        AnyExtractor::Ff(m) => write(path, KIND_FF_EXT, json!(m.config), &m.params, info),
    }
}

/// Writes actor and critic together (they share one parameter set).
pub fn save_actor_critic(path: &Path, ac: &ActorCritic, info: SaveInfo<'_>) -> Result<()> {
    write(path, KIND_RL, json!(ac.actor.config), ac.params(), info)
}

/// A checkpoint with its vocabulary decoded.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub ckpt: Checkpoint,
    pub vocab: Vocabulary,
}

impl Loaded {
    /// Reads `path`, checks its kind against `kinds` and its config hash
    /// against `expected_hash` (skipped when `None`).
    pub fn read(path: &Path, kinds: &[&str], expected_hash: Option<&str>, allow_mismatch: bool) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        if !kinds.contains(&ckpt.kind.as_str()) {
            return Err(Error::Checkpoint(format!(
                "{}: expected a {} checkpoint, found `{}`",
                path.display(),
                kinds.join(" or "),
                ckpt.kind
            )));
        }
        if let Some(h) = expected_hash {
            ckpt.check_config(h, allow_mismatch)?;
        }
        let tokens = ckpt
            .vocab
            .clone()
            .ok_or_else(|| Error::Checkpoint(format!("{}: no vocabulary", path.display())))?;
        let vocab = Vocabulary::from_tokens(tokens)?;
        Ok(Self { ckpt, vocab })
    }

    pub fn meta_usize(&self, key: &str) -> Option<usize> {
        self.ckpt.meta.get(key).and_then(Value::as_u64).map(|v| v as usize)
    }

    pub fn abstractor(&self) -> Result<Abstractor> {
        let cfg: AbstractorConfig = serde_json::from_value(self.ckpt.config.clone())?;
        Abstractor::from_params(cfg, self.ckpt.params.clone())
    }

    /// Any extractor kind, including the actor of an RL checkpoint.
    pub fn extractor(&self) -> Result<AnyExtractor> {
        let cfg: ExtractorConfig = serde_json::from_value(self.ckpt.config.clone())?;
        let p = self.ckpt.params.clone();
        Ok(match self.ckpt.kind.as_str() {
            KIND_FF_EXT => AnyExtractor::Ff(FfExtractor::from_params(cfg, p)?),
            _ => AnyExtractor::Rnn(Extractor::from_params(cfg, p)?),
        })
    }

    pub fn actor_critic(&self, seed: u64) -> Result<ActorCritic> {
        match self.extractor()? {
            AnyExtractor::Rnn(m) => Ok(ActorCritic::new(m, seed)),
            AnyExtractor::Ff(_) => Err(Error::Checkpoint("an ff-ext model cannot act as the RL policy".into())),
        }
    }
}
