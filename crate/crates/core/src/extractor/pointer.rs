//! Pointer-network sentence selection with a glimpse hop and an optional
//! end-of-extraction (EOE) candidate.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::encoder::{SentenceEncoder, SentenceReps};
use crate::error::{Error, Result};
use crate::substrate::layers::{Lstm, INIT_RANGE};
use crate::substrate::{rng, Init, ParamId, ParamSet, Rng, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub conv_filters: usize,
    pub hidden: usize,
}

impl ExtractorConfig {
    /// Full-size model: 128-d embeddings, 100 filters per window, 256 hidden units.
    pub fn full(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            emb_dim: 128,
            conv_filters: 100,
            hidden: 256,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PointerIds {
    pub enc: SentenceEncoder,
    pub dec: Lstm,
    pub dec_h0: ParamId,
    pub dec_c0: ParamId,
    pub start: ParamId,
    pub glimpse_v: ParamId,
    pub glimpse_mem: ParamId,
    pub glimpse_query: ParamId,
    pub ptr_v: ParamId,
    pub ptr_mem: ParamId,
    pub ptr_query: ParamId,
    pub eoe: ParamId,
}

/// The rnn-ext sentence extractor.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub config: ExtractorConfig,
    pub params: ParamSet,
    pub ids: PointerIds,
}

/// Attention keys over the candidate rows (document sentences, then EOE).
#[derive(Debug, Clone)]
pub struct PointerMemory {
    pub h: Vec<Var>,
    pub n_sents: usize,
    pub has_eoe: bool,
    glimpse_keys: Var,
    ptr_keys: Var,
}

impl PointerMemory {
    pub fn n_slots(&self) -> usize {
        self.n_sents + usize::from(self.has_eoe)
    }

    /// Slot index of the stop action, if present.
    pub fn eoe_slot(&self) -> Option<usize> {
        self.has_eoe.then_some(self.n_sents)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub h: Var,
    pub c: Var,
    pub input: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub logits: Var,
    pub log_probs: Var,
    /// Glimpse attention weights over the memory rows.
    pub glimpse: Var,
    pub context: Var,
    pub state: DecoderState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Greedy,
    Sample,
}

/// Result of running the extractor on one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Selected sentence indices in selection order (EOE excluded).
    pub indices: Vec<usize>,
    /// Whether the run ended with the stop action.
    pub stopped: bool,
    /// Log-probability of every action taken, including the stop action.
    pub log_probs: Vec<f64>,
}

/// How many sentences greedy extraction takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop action enabled, at most `cap` sentences.
    Eoe { cap: usize },
    /// Exactly `k` sentences (fewer if the document is shorter), no stop action.
    FixedK(usize),
}

/// A decode recorded on a tape, for training.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Slot chosen at every step; `n_sents` denotes EOE.
    pub actions: Vec<usize>,
    pub log_prob_vars: Vec<Var>,
    /// Full probability vector at every step.
    pub probs: Vec<Vec<f64>>,
}

impl Extractor {
    pub fn new(config: ExtractorConfig, seed: u64) -> Self {
        let mut params = ParamSet::new();
        let mut r = rng(seed);
        let ids = Self::register(&mut params, &config, &mut r);
        Self { config, params, ids }
    }

    fn register(params: &mut ParamSet, c: &ExtractorConfig, r: &mut Rng) -> PointerIds {
        let enc = SentenceEncoder::register(params, "enc", c.vocab_size, c.emb_dim, c.conv_filters, c.hidden, r);
        let hd = enc.h_dim();
        let a = c.hidden;
        let u = Init::Uniform(INIT_RANGE);
        PointerIds {
            enc,
            dec: Lstm::register(params, "ptr.dec", hd, c.hidden, r),
            dec_h0: params.add("ptr.dec.h0", c.hidden, 1, u, r),
            dec_c0: params.add("ptr.dec.c0", c.hidden, 1, u, r),
            start: params.add("ptr.start", hd, 1, u, r),
            glimpse_v: params.add("ptr.glimpse.v", a, 1, u, r),
            glimpse_mem: params.add("ptr.glimpse.w_mem", a, hd, u, r),
            glimpse_query: params.add("ptr.glimpse.w_query", a, c.hidden, u, r),
            ptr_v: params.add("ptr.v", a, 1, u, r),
            ptr_mem: params.add("ptr.w_mem", a, hd, u, r),
            ptr_query: params.add("ptr.w_query", a, a, u, r),
            eoe: params.add("ptr.eoe", hd, 1, u, r),
        }
    }

    /// Rebuilds from stored parameters (e.g. a checkpoint).
    pub fn from_params(config: ExtractorConfig, params: ParamSet) -> Result<Self> {
        let mut fresh = Self::new(config, 0);
        fresh.params.load_all_from(&params)?;
        // keep any extra tensors (e.g. critic) the checkpoint carries
        for (_, name, t) in params.iter() {
            if fresh.params.id(name).is_err() {
                fresh.params.insert_tensor(name, t.clone())?;
            }
        }
        Ok(fresh)
    }

    pub fn encode(&self, t: &mut Tape<'_>, doc: &[Vec<usize>]) -> SentenceReps {
        self.ids.enc.encode(t, doc)
    }

    pub fn memory(&self, t: &mut Tape<'_>, reps: &SentenceReps, use_eoe: bool) -> PointerMemory {
        let mut rows = reps.h.clone();
        if use_eoe {
            rows.push(t.param(self.ids.eoe));
        }
        let stacked = t.stack(&rows);
        let gm = t.param(self.ids.glimpse_mem);
        let pm = t.param(self.ids.ptr_mem);
        PointerMemory {
            h: reps.h.clone(),
            n_sents: reps.h.len(),
            has_eoe: use_eoe,
            glimpse_keys: t.matmul_t(stacked, gm),
            ptr_keys: t.matmul_t(stacked, pm),
        }
    }

    pub fn start(&self, t: &mut Tape<'_>) -> DecoderState {
        DecoderState {
            h: t.param(self.ids.dec_h0),
            c: t.param(self.ids.dec_c0),
            input: t.param(self.ids.start),
        }
    }

    /// One selection step. Slots with `mask[j] == false` get probability 0;
    /// the EOE slot should always be left unmasked.
    pub fn step(&self, t: &mut Tape<'_>, mem: &PointerMemory, state: DecoderState, mask: Option<&[bool]>) -> StepOutput {
        let (h, c) = self.ids.dec.step(t, state.input, state.h, state.c);
        let q = t.linear(self.ids.glimpse_query, h);
        let gv = t.param(self.ids.glimpse_v);
        let a = t.additive_scores(mem.glimpse_keys, q, gv);
        let alpha = t.softmax(a, None);
        let e = t.matvec_t(mem.glimpse_keys, alpha);
        let q2 = t.linear(self.ids.ptr_query, e);
        let pv = t.param(self.ids.ptr_v);
        let logits = t.additive_scores(mem.ptr_keys, q2, pv);
        let log_probs = t.log_softmax(logits, mask);
        StepOutput {
            logits,
            log_probs,
            glimpse: alpha,
            context: e,
            state: DecoderState { h, c, input: state.input },
        }
    }

    /// Feeds the chosen sentence's context vector as the next decoder input.
    pub fn advance(&self, state: DecoderState, mem: &PointerMemory, chosen: usize) -> DecoderState {
        DecoderState {
            input: mem.h[chosen],
            ..state
        }
    }

    /// Decodes with the repeat mask. Stops at EOE (when `use_eoe`) or after
    /// `max_steps` sentences, never selecting more than the document holds.
    pub fn decode_on_tape(
        &self,
        t: &mut Tape<'_>,
        mem: &PointerMemory,
        mode: Mode,
        max_steps: usize,
        rng: Option<&mut Rng>,
    ) -> Trajectory {
        let mut policy = |_: usize, probs: &[f64], rng: &mut Option<&mut Rng>| match mode {
            Mode::Greedy => argmax(probs),
            Mode::Sample => sample_index(probs, rng.as_deref_mut().expect("sampling needs an rng")),
        };
        self.decode_with(t, mem, max_steps, rng, &mut policy)
    }

    /// Replays a given action sequence (slot indices, `n_sents` for EOE)
    /// under the repeat mask.
    pub fn replay_on_tape(&self, t: &mut Tape<'_>, mem: &PointerMemory, actions: &[usize]) -> Trajectory {
        let mut policy = |step: usize, _: &[f64], _: &mut Option<&mut Rng>| actions[step];
        let traj = self.decode_with(t, mem, actions.len(), None, &mut policy);
        debug_assert_eq!(traj.actions, actions);
        traj
    }

    fn decode_with(
        &self,
        t: &mut Tape<'_>,
        mem: &PointerMemory,
        max_steps: usize,
        mut rng: Option<&mut Rng>,
        policy: &mut dyn FnMut(usize, &[f64], &mut Option<&mut Rng>) -> usize,
    ) -> Trajectory {
        let n = mem.n_sents;
        let limit = max_steps.min(n);
        let mut mask = vec![true; mem.n_slots()];
        let mut state = self.start(t);
        let mut traj = Trajectory {
            actions: Vec::new(),
            log_prob_vars: Vec::new(),
            probs: Vec::new(),
        };
        let mut selected = 0;
        while selected < limit {
            let out = self.step(t, mem, state, Some(&mask));
            let probs: Vec<f64> = t.value(out.log_probs).iter().map(|lp| lp.exp()).collect();
            let a = policy(traj.actions.len(), &probs, &mut rng);
            assert!(mask[a], "action {a} is masked");
            let lp = t.pick(out.log_probs, a);
            traj.actions.push(a);
            traj.log_prob_vars.push(lp);
            traj.probs.push(probs);
            if Some(a) == mem.eoe_slot() {
                break;
            }
            mask[a] = false;
            selected += 1;
            state = self.advance(out.state, mem, a);
        }
        traj
    }

    /// Runs the extractor on one encoded document without recording gradients.
    pub fn run(&self, doc: &[Vec<usize>], mode: Mode, max_steps: usize, use_eoe: bool, rng: Option<&mut Rng>) -> Extraction {
        assert!(max_steps >= 1);
        let mut t = Tape::new(&self.params);
        let reps = self.encode(&mut t, doc);
        let mem = self.memory(&mut t, &reps, use_eoe);
        let traj = self.decode_on_tape(&mut t, &mem, mode, max_steps, rng);
        let eoe = mem.eoe_slot();
        Extraction {
            indices: traj.actions.iter().copied().filter(|&a| Some(a) != eoe).collect(),
            stopped: eoe.is_some() && traj.actions.last().copied() == eoe,
            log_probs: traj.log_prob_vars.iter().map(|&v| t.scalar(v)).collect(),
        }
    }

    /// Greedy extraction under a stop rule.
    pub fn extract(&self, doc: &[Vec<usize>], rule: StopRule) -> Extraction {
        match rule {
            StopRule::Eoe { cap } => self.run(doc, Mode::Greedy, cap.max(1), true, None),
            StopRule::FixedK(k) => self.run(doc, Mode::Greedy, k.max(1), false, None),
        }
    }

    /// Teacher-forced cross-entropy `Σ_t −log P(j_t | j_<t)` without the
    /// repeat mask and without the EOE candidate.
    pub fn ml_loss_on_tape(&self, t: &mut Tape<'_>, doc: &[Vec<usize>], labels: &[usize]) -> Result<Var> {
        if let Some(&bad) = labels.iter().find(|&&j| j >= doc.len()) {
            return Err(Error::LabelOutOfRange {
                index: bad,
                len: doc.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("no extraction labels".into()));
        }
        let reps = self.encode(t, doc);
        let mem = self.memory(t, &reps, false);
        let mut state = self.start(t);
        let mut terms = Vec::with_capacity(labels.len());
        for &j in labels {
            let out = self.step(t, &mem, state, None);
            terms.push(t.pick(out.log_probs, j));
            state = self.advance(out.state, &mem, j);
        }
        let total = t.add_all(&terms);
        Ok(t.scale(total, -1.0))
    }

    pub fn ml_loss(&self, doc: &[Vec<usize>], labels: &[usize]) -> Result<f64> {
        let mut t = Tape::new(&self.params);
        let l = self.ml_loss_on_tape(&mut t, doc, labels)?;
        Ok(t.scalar(l))
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF sample from a probability vector.
pub fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
