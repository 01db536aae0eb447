//! Maximum-likelihood training loops shared by every model.

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::abstractor::Abstractor;
use crate::corpus::{Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::extractor::{Extractor, FfExtractor};
use crate::substrate::{adam_step, clip_gradients, rng, EarlyStopping, OptimState, ParamSet, Tape, Var};

/// A model trained by minimizing a differentiable batch loss.
pub trait Trainable {
    type Example;

    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    fn batch_loss(&self, t: &mut Tape<'_>, batch: &[&Self::Example]) -> Result<Var>;
}

/// `(document sentence ids, proxy label sequence)`.
pub type ExtractionExample = (Vec<Vec<usize>>, Vec<usize>);

impl Trainable for Extractor {
    type Example = ExtractionExample;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Mean over documents of the summed per-step cross-entropy.
    fn batch_loss(&self, t: &mut Tape<'_>, batch: &[&ExtractionExample]) -> Result<Var> {
        let terms = batch
            .iter()
            .map(|(doc, labels)| self.ml_loss_on_tape(t, doc, labels))
            .collect::<Result<Vec<_>>>()?;
        let total = t.add_all(&terms);
        Ok(t.scale(total, 1.0 / batch.len() as f64))
    }
}

impl Trainable for FfExtractor {
    type Example = ExtractionExample;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn batch_loss(&self, t: &mut Tape<'_>, batch: &[&ExtractionExample]) -> Result<Var> {
        let terms = batch
            .iter()
            .map(|(doc, labels)| self.loss_on_tape(t, doc, labels))
            .collect::<Result<Vec<_>>>()?;
        let total = t.add_all(&terms);
        Ok(t.scale(total, 1.0 / batch.len() as f64))
    }
}

/// An abstractor bundled with the vocabulary its pairs are encoded with.
#[derive(Debug, Clone)]
pub struct AbstractorTrainer {
    pub model: Abstractor,
    pub vocab: Vocabulary,
}

impl Trainable for AbstractorTrainer {
    type Example = (Sentence, Sentence);

    fn params(&self) -> &ParamSet {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.model.params
    }

    fn batch_loss(&self, t: &mut Tape<'_>, batch: &[&(Sentence, Sentence)]) -> Result<Var> {
        let owned: Vec<(Sentence, Sentence)> = batch.iter().map(|p| (*p).clone()).collect();
        self.model.ml_loss_on_tape(t, &owned, &self.vocab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub clip: f64,
    pub max_epochs: usize,
    /// Stop after this many plateau-driven learning-rate halvings.
    pub max_halvings: usize,
    /// Batches between validation passes; 0 validates once per epoch.
    pub eval_every: usize,
}

impl Default for MlSettings {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            clip: 2.0,
            max_epochs: 20,
            max_halvings: 3,
            eval_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// `(batches seen, mean training loss since the last point, validation loss)`.
    pub points: Vec<(usize, f64, f64)>,
    pub best_val: f64,
    pub batches: usize,
    pub final_lr: f64,
}

/// Mean batch loss over `data` without gradients, weighted by batch size.
pub fn evaluate_loss<M: Trainable>(model: &M, data: &[M::Example], batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&M::Example> = chunk.iter().collect();
        let mut t = Tape::new(model.params());
        let l = model.batch_loss(&mut t, &refs)?;
        total += t.scalar(l) * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// One optimizer step on a batch; returns the batch loss.
pub fn train_step<M: Trainable>(model: &mut M, batch: &[&M::Example], opt: &mut OptimState, clip: f64) -> Result<f64> {
    let (loss, mut grads) = {
        let mut t = Tape::new(model.params());
        let l = model.batch_loss(&mut t, batch)?;
        let v = t.scalar(l);
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss(format!("batch loss {v}")));
        }
        (v, t.backward(l))
    };
    clip_gradients(&mut grads, clip);
    adam_step(model.params_mut(), &grads, opt)?;
    Ok(loss)
}

/// Minibatch Adam with gradient clipping, learning-rate halving on
/// validation plateaus and early stopping. The parameters with the lowest
/// validation loss are restored at the end (the final ones when `val` is
/// empty). Returns the log and the final optimizer state.
pub fn train_ml<M: Trainable>(model: &mut M, train: &[M::Example], val: &[M::Example], s: &MlSettings, seed: u64) -> Result<(TrainLog, OptimState)> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if s.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut r = rng(seed);
    let mut opt = OptimState::new(model.params(), s.lr);
    let mut stopper = EarlyStopping::new(s.max_halvings);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.params().clone();
    let mut log = TrainLog {
        points: Vec::new(),
        best_val: f64::INFINITY,
        batches: 0,
        final_lr: s.lr,
    };
    let (mut acc, mut acc_n) = (0.0, 0usize);
    let mut stop = false;

    'epochs: for epoch in 0..s.max_epochs {
        order.shuffle(&mut r);
        let n_batches = order.len().div_ceil(s.batch_size);
        for (b, chunk) in order.chunks(s.batch_size).enumerate() {
            let batch: Vec<&M::Example> = chunk.iter().map(|&i| &train[i]).collect();
            acc += train_step(model, &batch, &mut opt, s.clip)?;
            acc_n += 1;
            log.batches += 1;
            let at_check = if s.eval_every == 0 {
                b + 1 == n_batches
            } else {
                log.batches % s.eval_every == 0
            };
            if at_check {
                let train_loss = acc / acc_n as f64;
                (acc, acc_n) = (0.0, 0);
                if val.is_empty() {
                    log.points.push((log.batches, train_loss, f64::NAN));
                    continue;
                }
                let v = evaluate_loss(model, val, s.batch_size)?;
                info!("epoch {epoch} batch {}: train {train_loss:.4} val {v:.4} lr {:.2e}", log.batches, opt.lr);
                log.points.push((log.batches, train_loss, v));
                if v < log.best_val {
                    log.best_val = v;
                    best = model.params().clone();
                }
                if stopper.observe(&mut opt, v) {
                    stop = true;
                    break 'epochs;
                }
            }
        }
    }
    if !stop {
        info!("stopped after {} epochs", s.max_epochs);
    }
    if !val.is_empty() {
        model.params_mut().load_from(&best)?;
    }
    log.final_lr = opt.lr;
    Ok((log, opt))
}
