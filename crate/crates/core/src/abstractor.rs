//! Sentence rewriter: bidirectional LSTM encoder, bilinear attention and an
//! LSTM decoder whose output mixes generation over the fixed vocabulary with
//! copying from the source sentence.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, END, START, UNK};
use crate::error::{Error, Result};
use crate::extractor::argmax;
use crate::substrate::layers::{Linear, Lstm, EMB_STD, INIT_RANGE};
use crate::substrate::{rng, Init, ParamId, ParamSet, Tape, Var};

/// Default generation limit in tokens.
pub const MAX_DECODE_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractorConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub hidden: usize,
}

impl AbstractorConfig {
    pub fn full(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            emb_dim: 128,
            hidden: 256,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AbstractorIds {
    /// Shared by encoder input, decoder input and output projection.
    pub emb: ParamId,
    pub enc_fwd: Lstm,
    pub enc_bwd: Lstm,
    pub init_h: Linear,
    pub init_c: Linear,
    pub dec: Lstm,
    /// Bilinear attention matrix, stored `hidden x 2·hidden`.
    pub attn: ParamId,
    pub out: Linear,
    pub copy_ctx: ParamId,
    pub copy_state: ParamId,
    pub copy_input: ParamId,
    pub copy_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct Abstractor {
    pub config: AbstractorConfig,
    pub params: ParamSet,
    pub ids: AbstractorIds,
}

/// A source sentence mapped into the fixed and the extended vocabulary.
/// Source tokens missing from the vocabulary get extended ids
/// `vocab_size + k` in order of first occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub ext_ids: Vec<usize>,
    pub oovs: Vec<String>,
    vocab_size: usize,
}

impl Source {
    pub fn new(tokens: &[String], vocab: &Vocabulary) -> Self {
        assert!(!tokens.is_empty(), "empty source sentence");
        let mut oovs: Vec<String> = Vec::new();
        let mut ids = Vec::with_capacity(tokens.len());
        let mut ext_ids = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let id = vocab.encode(tok);
            ids.push(id);
            if id == UNK {
                let k = match oovs.iter().position(|o| o == tok) {
                    Some(k) => k,
                    None => {
                        oovs.push(tok.clone());
                        oovs.len() - 1
                    }
                };
                ext_ids.push(vocab.len() + k);
            } else {
                ext_ids.push(id);
            }
        }
        Self {
            tokens: tokens.to_vec(),
            ids,
            ext_ids,
            oovs,
            vocab_size: vocab.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ext_size(&self) -> usize {
        self.vocab_size + self.oovs.len()
    }

    pub fn token(&self, ext_id: usize, vocab: &Vocabulary) -> String {
        if ext_id < self.vocab_size {
            vocab.decode(ext_id).to_string()
        } else {
            self.oovs[ext_id - self.vocab_size].clone()
        }
    }

    /// Extended ids of a target sentence with END appended. Tokens neither
    /// in the vocabulary nor in the source become UNK.
    pub fn target_ids(&self, target: &[String], vocab: &Vocabulary) -> Vec<usize> {
        let mut out: Vec<usize> = target
            .iter()
            .map(|tok| {
                let id = vocab.encode(tok);
                if id != UNK {
                    return id;
                }
                match self.oovs.iter().position(|o| o == tok) {
                    Some(k) => self.vocab_size + k,
                    None => {
                        warn!("target token `{tok}` is neither in the vocabulary nor in the source; scored as UNK");
                        UNK
                    }
                }
            })
            .collect();
        out.push(END);
        out
    }
}

/// Encoder output on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `n x 2·hidden` encoder states.
    pub states: Var,
    /// `n x hidden` attention keys `W_attn h_i`.
    pub keys: Var,
    pub h0: Var,
    pub c0: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    /// Distribution over the extended vocabulary.
    pub dist: Var,
    pub attention: Var,
    pub p_copy: Var,
    pub h: Var,
    pub c: Var,
}

/// Encoder output as plain values, reusable across tapes.
#[derive(Debug, Clone)]
pub struct Prepared {
    n: usize,
    states: Vec<f64>,
    keys: Vec<f64>,
    pub initial: DecoderValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderValues {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Previous output token (extended id).
    pub prev: usize,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub probs: Vec<f64>,
    pub attention: Vec<f64>,
    pub p_copy: f64,
    pub next: DecoderValues,
}

/// Gate override used to probe the mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CopyGate {
    Learned,
    Fixed(f64),
}

impl Abstractor {
    pub fn new(config: AbstractorConfig, seed: u64) -> Self {
        let mut params = ParamSet::new();
        let mut r = rng(seed);
        let (e, h) = (config.emb_dim, config.hidden);
        let u = Init::Uniform(INIT_RANGE);
        let ids = AbstractorIds {
            emb: params.add("abs.emb", config.vocab_size, e, Init::Normal(EMB_STD), &mut r),
            enc_fwd: Lstm::register(&mut params, "abs.enc.fwd", e, h, &mut r),
            enc_bwd: Lstm::register(&mut params, "abs.enc.bwd", e, h, &mut r),
            init_h: Linear::register(&mut params, "abs.init_h", 2 * h, h, &mut r),
            init_c: Linear::register(&mut params, "abs.init_c", 2 * h, h, &mut r),
            dec: Lstm::register(&mut params, "abs.dec", e, h, &mut r),
            attn: params.add("abs.attn", h, 2 * h, u, &mut r),
            out: Linear::register(&mut params, "abs.out", 3 * h, e, &mut r),
            copy_ctx: params.add("abs.copy.ctx", 2 * h, 1, u, &mut r),
            copy_state: params.add("abs.copy.state", h, 1, u, &mut r),
            copy_input: params.add("abs.copy.input", e, 1, u, &mut r),
            copy_b: params.add("abs.copy.b", 1, 1, Init::Zeros, &mut r),
        };
        Self { config, params, ids }
    }

    pub fn from_params(config: AbstractorConfig, params: ParamSet) -> Result<Self> {
        let mut fresh = Self::new(config, 0);
        fresh.params.load_all_from(&params)?;
        Ok(fresh)
    }

    /// Marks every parameter (non-)trainable.
    pub fn set_trainable(&mut self, trainable: bool) {
        let ids: Vec<ParamId> = self.params.iter().map(|(id, _, _)| id).collect();
        for id in ids {
            self.params.set_trainable(id, trainable);
        }
    }

    fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.len() != self.config.vocab_size {
            return Err(Error::InvalidArgument(format!(
                "vocabulary has {} entries, abstractor expects {}",
                vocab.len(),
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    pub fn encode(&self, t: &mut Tape<'_>, src: &Source) -> Encoded {
        let h = self.config.hidden;
        let xs: Vec<Var> = src.ids.iter().map(|&id| t.row(self.ids.emb, id)).collect();
        let z = t.zeros(h);
        let (fwd, (fh, fc)) = self.ids.enc_fwd.run(t, &xs, z, z);
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        let (mut bwd, (bh, bc)) = self.ids.enc_bwd.run(t, &rev, z, z);
        bwd.reverse();
        let rows: Vec<Var> = fwd.iter().zip(&bwd).map(|(&f, &b)| t.concat(&[f, b])).collect();
        let states = t.stack(&rows);
        let attn = t.param(self.ids.attn);
        let keys = t.matmul_t(states, attn);
        let hf = t.concat(&[fh, bh]);
        let cf = t.concat(&[fc, bc]);
        Encoded {
            states,
            keys,
            h0: self.ids.init_h.forward(t, hf),
            c0: self.ids.init_c.forward(t, cf),
        }
    }

    /// Bilinear attention `h_iᵀ W_attn z` over the encoder states; returns
    /// the context vector and the weights.
    pub fn attend(&self, t: &mut Tape<'_>, enc: &Encoded, z: Var) -> (Var, Var) {
        let scores = t.matvec(enc.keys, z);
        let alpha = t.softmax(scores, None);
        let ctx = t.matvec_t(enc.states, alpha);
        (ctx, alpha)
    }

    pub fn step_on_tape(&self, t: &mut Tape<'_>, enc: &Encoded, src: &Source, h: Var, c: Var, prev: usize, gate: CopyGate) -> StepVars {
        let input_id = if prev < self.config.vocab_size { prev } else { UNK };
        let x = t.row(self.ids.emb, input_id);
        let (h, c) = self.ids.dec.step(t, x, h, c);
        let (ctx, alpha) = self.attend(t, enc, h);
        let hc = t.concat(&[h, ctx]);
        let pre = self.ids.out.forward(t, hc);
        let o = t.tanh(pre);
        let emb = t.param(self.ids.emb);
        let logits = t.matvec(emb, o);
        let gen = t.softmax(logits, None);

        let p_copy = match gate {
            CopyGate::Learned => {
                let vc = t.param(self.ids.copy_ctx);
                let vs = t.param(self.ids.copy_state);
                let vw = t.param(self.ids.copy_input);
                let b = t.param(self.ids.copy_b);
                let a = t.dot(vc, ctx);
                let s = t.dot(vs, h);
                let w = t.dot(vw, x);
                let sum = t.add_all(&[a, s, w, b]);
                t.sigmoid(sum)
            }
            CopyGate::Fixed(p) => t.constant(vec![p]),
        };
        let ext = src.ext_size();
        let copy = t.scatter(alpha, &src.ext_ids, ext);
        let identity: Vec<usize> = (0..self.config.vocab_size).collect();
        let gen_ext = t.scatter(gen, &identity, ext);
        let copy_part = t.mul_scalar(copy, p_copy);
        let keep = t.one_minus(p_copy);
        let gen_part = t.mul_scalar(gen_ext, keep);
        StepVars {
            dist: t.add(copy_part, gen_part),
            attention: alpha,
            p_copy,
            h,
            c,
        }
    }

    /// Teacher-forced negative log-likelihood summed over the target tokens
    /// (END included). Returns the loss node and the token count.
    pub fn nll_on_tape(&self, t: &mut Tape<'_>, src: &Source, target_ids: &[usize]) -> (Var, usize) {
        assert!(!target_ids.is_empty());
        let enc = self.encode(t, src);
        let (mut h, mut c) = (enc.h0, enc.c0);
        let mut prev = START;
        let mut terms = Vec::with_capacity(target_ids.len());
        for &y in target_ids {
            let s = self.step_on_tape(t, &enc, src, h, c, prev, CopyGate::Learned);
            let p = t.pick(s.dist, y);
            terms.push(t.ln(p));
            h = s.h;
            c = s.c;
            prev = y;
        }
        let total = t.add_all(&terms);
        (t.scale(total, -1.0), terms.len())
    }

    /// Mean per-token cross-entropy over `(source, target)` pairs.
    pub fn ml_loss_on_tape(&self, t: &mut Tape<'_>, pairs: &[(Vec<String>, Vec<String>)], vocab: &Vocabulary) -> Result<Var> {
        self.check_vocab(vocab)?;
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("no training pairs".into()));
        }
        let mut sums = Vec::with_capacity(pairs.len());
        let mut count = 0;
        for (s, tgt) in pairs {
            if s.is_empty() || tgt.is_empty() {
                return Err(Error::InvalidArgument("empty source or target sentence".into()));
            }
            let src = Source::new(s, vocab);
            let ids = src.target_ids(tgt, vocab);
            let (l, n) = self.nll_on_tape(t, &src, &ids);
            sums.push(l);
            count += n;
        }
        let total = t.add_all(&sums);
        Ok(t.scale(total, 1.0 / count as f64))
    }

    pub fn ml_loss(&self, pairs: &[(Vec<String>, Vec<String>)], vocab: &Vocabulary) -> Result<f64> {
        let mut t = Tape::new(&self.params);
        let l = self.ml_loss_on_tape(&mut t, pairs, vocab)?;
        Ok(t.scalar(l))
    }

    pub fn prepare(&self, src: &Source) -> Prepared {
        let mut t = Tape::new(&self.params);
        let enc = self.encode(&mut t, src);
        Prepared {
            n: src.len(),
            states: t.value(enc.states).to_vec(),
            keys: t.value(enc.keys).to_vec(),
            initial: DecoderValues {
                h: t.value(enc.h0).to_vec(),
                c: t.value(enc.c0).to_vec(),
                prev: START,
            },
        }
    }

    /// One inference step from stored values; `token` becomes the previous
    /// token of the returned state.
    pub fn infer_step(&self, src: &Source, prep: &Prepared, state: &DecoderValues, gate: CopyGate) -> StepResult {
        let h = self.config.hidden;
        let mut t = Tape::new(&self.params);
        let enc = Encoded {
            states: t.constant_matrix(prep.n, 2 * h, prep.states.clone()),
            keys: t.constant_matrix(prep.n, h, prep.keys.clone()),
            h0: t.constant(state.h.clone()),
            c0: t.constant(state.c.clone()),
        };
        let s = self.step_on_tape(&mut t, &enc, src, enc.h0, enc.c0, state.prev, gate);
        StepResult {
            probs: t.value(s.dist).to_vec(),
            attention: t.value(s.attention).to_vec(),
            p_copy: t.scalar(s.p_copy),
            next: DecoderValues {
                h: t.value(s.h).to_vec(),
                c: t.value(s.c).to_vec(),
                prev: state.prev,
            },
        }
    }

    /// Greedy decoding until END or `max_len` tokens. An UNK output is
    /// replaced by the source token with the highest attention weight.
    pub fn greedy_decode(&self, src: &Source, vocab: &Vocabulary, max_len: usize) -> Vec<String> {
        assert!(max_len >= 1);
        let prep = self.prepare(src);
        let mut state = prep.initial.clone();
        let mut out = Vec::new();
        while out.len() < max_len {
            let step = self.infer_step(src, &prep, &state, CopyGate::Learned);
            let tok = argmax(&step.probs);
            if tok == END {
                break;
            }
            out.push(output_token(src, vocab, tok, &step.attention));
            state = step.next;
            state.prev = tok;
        }
        out
    }

    /// Greedy rewrite of a tokenized sentence with the default length limit.
    pub fn rewrite(&self, sentence: &[String], vocab: &Vocabulary) -> Vec<String> {
        self.greedy_decode(&Source::new(sentence, vocab), vocab, MAX_DECODE_LEN)
    }
}

/// Surface form of an emitted extended id, applying the UNK rule.
pub fn output_token(src: &Source, vocab: &Vocabulary, tok: usize, attention: &[f64]) -> String {
    if tok == UNK {
        src.tokens[argmax(attention)].clone()
    } else {
        src.token(tok, vocab)
    }
}
