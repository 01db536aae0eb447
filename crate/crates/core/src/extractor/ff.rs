//! Feed-forward extractor baseline: every sentence is an independent binary
//! decision conditioned on a document vector.

use std::collections::BTreeSet;

use super::encoder::SentenceEncoder;
use super::pointer::ExtractorConfig;
use crate::error::{Error, Result};
use crate::substrate::layers::INIT_RANGE;
use crate::substrate::{rng, Init, ParamId, ParamSet, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct FfIds {
    pub enc: SentenceEncoder,
    pub doc_w: ParamId,
    pub doc_b: ParamId,
    pub content_w: ParamId,
    pub salience_w: ParamId,
    pub bias: ParamId,
}

/// The ff-ext sentence extractor.
#[derive(Debug, Clone)]
pub struct FfExtractor {
    pub config: ExtractorConfig,
    pub params: ParamSet,
    pub ids: FfIds,
}

impl FfExtractor {
    pub fn new(config: ExtractorConfig, seed: u64) -> Self {
        let mut params = ParamSet::new();
        let mut r = rng(seed);
        let c = &config;
        let enc = SentenceEncoder::register(&mut params, "enc", c.vocab_size, c.emb_dim, c.conv_filters, c.hidden, &mut r);
        let hd = enc.h_dim();
        let u = Init::Uniform(INIT_RANGE);
        let ids = FfIds {
            enc,
            doc_w: params.add("ff.doc.w", hd, hd, u, &mut r),
            doc_b: params.add("ff.doc.b", hd, 1, Init::Zeros, &mut r),
            content_w: params.add("ff.content.w", hd, 1, u, &mut r),
            salience_w: params.add("ff.salience.w", hd, hd, u, &mut r),
            bias: params.add("ff.b", 1, 1, Init::Zeros, &mut r),
        };
        Self { config, params, ids }
    }

    pub fn from_params(config: ExtractorConfig, params: ParamSet) -> Result<Self> {
        let mut fresh = Self::new(config, 0);
        fresh.params.load_all_from(&params)?;
        Ok(fresh)
    }

    /// Per-sentence logits `W_c h_j + h_jᵀ W_s x̂ + b` with
    /// `x̂ = tanh(W_d mean(h) + b_d)`.
    pub fn logits_on_tape(&self, t: &mut Tape<'_>, doc: &[Vec<usize>]) -> Vec<Var> {
        let reps = self.ids.enc.encode(t, doc);
        let mean = t.mean(&reps.h);
        let pre = t.affine(self.ids.doc_w, mean, self.ids.doc_b);
        let x_hat = t.tanh(pre);
        let ws = t.param(self.ids.salience_w);
        let sx = t.matvec(ws, x_hat);
        let wc = t.param(self.ids.content_w);
        let b = t.param(self.ids.bias);
        reps.h
            .iter()
            .map(|&h| {
                let content = t.dot(wc, h);
                let salience = t.dot(h, sx);
                let s = t.add(content, salience);
                t.add(s, b)
            })
            .collect()
    }

    /// Selection probabilities, one per sentence, in (0, 1).
    pub fn forward(&self, doc: &[Vec<usize>]) -> Vec<f64> {
        let mut t = Tape::new(&self.params);
        let logits = self.logits_on_tape(&mut t, doc);
        logits.iter().map(|&l| crate::substrate::tape::sigmoid(t.scalar(l))).collect()
    }

    /// Mean binary cross-entropy over sentences; the positive set is the
    /// distinct proxy label indices.
    pub fn loss_on_tape(&self, t: &mut Tape<'_>, doc: &[Vec<usize>], labels: &[usize]) -> Result<Var> {
        if let Some(&bad) = labels.iter().find(|&&j| j >= doc.len()) {
            return Err(Error::LabelOutOfRange {
                index: bad,
                len: doc.len(),
            });
        }
        let positive: BTreeSet<usize> = labels.iter().copied().collect();
        let logits = self.logits_on_tape(t, doc);
        let terms: Vec<Var> = logits
            .iter()
            .enumerate()
            .map(|(j, &l)| {
                // −log σ(l) for positives, −log(1 − σ(l)) = −log σ(−l) otherwise
                let signed = if positive.contains(&j) { l } else { t.scale(l, -1.0) };
                let p = t.sigmoid(signed);
                let lp = t.ln(p);
                t.scale(lp, -1.0)
            })
            .collect();
        Ok(t.mean(&terms))
    }

    pub fn loss(&self, doc: &[Vec<usize>], labels: &[usize]) -> Result<f64> {
        let mut t = Tape::new(&self.params);
        let l = self.loss_on_tape(&mut t, doc, labels)?;
        Ok(t.scalar(l))
    }

    pub fn select(&self, doc: &[Vec<usize>], k: usize) -> Vec<usize> {
        ff_ext_select(&self.forward(doc), k)
    }
}

/// Top-`k` indices by probability (lower index on ties), returned in
/// document order. `k > n` returns every index.
pub fn ff_ext_select(probs: &[f64], k: usize) -> Vec<usize> {
    assert!(k >= 1, "k must be at least 1");
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}
