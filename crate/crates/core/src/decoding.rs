//! Beam search with trigram blocking and sibling-rank diversity, the
//! combination reranker, parallel per-sentence rewriting and the end-to-end
//! summarizer.

use std::collections::HashSet;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstractor::{output_token, Abstractor, CopyGate, DecoderValues, Prepared, Source, MAX_DECODE_LEN};
use crate::corpus::{Document, Sentence, Vocabulary, END, START};
use crate::error::{Error, Result};
use crate::extractor::{argmax, AnyExtractor, StopRule};
use crate::metrics::ngram_counts;

/// Default bound on the number of combinations the reranker enumerates.
pub const RERANK_CAP: usize = 1_000_000;

/// A step-wise scorer over an output space (the abstractor, or a toy
/// model in tests).
pub trait StepScorer {
    type State: Clone;

    fn initial(&self) -> Self::State;

    /// Log-probabilities over the output space and attention weights after
    /// feeding `prev`, and the resulting state.
    fn score(&self, state: &Self::State, prev: usize) -> (Vec<f64>, Vec<f64>, Self::State);
}

/// Abstractor decoding of one source sentence.
pub struct AbstractorScorer<'a> {
    pub abs: &'a Abstractor,
    pub src: &'a Source,
    prep: Prepared,
}

impl<'a> AbstractorScorer<'a> {
    pub fn new(abs: &'a Abstractor, src: &'a Source) -> Self {
        Self {
            abs,
            src,
            prep: abs.prepare(src),
        }
    }
}

impl StepScorer for AbstractorScorer<'_> {
    type State = DecoderValues;

    fn initial(&self) -> DecoderValues {
        self.prep.initial.clone()
    }

    fn score(&self, state: &DecoderValues, prev: usize) -> (Vec<f64>, Vec<f64>, DecoderValues) {
        let st = DecoderValues {
            prev,
            ..state.clone()
        };
        let r = self.abs.infer_step(self.src, &self.prep, &st, CopyGate::Learned);
        (r.probs.iter().map(|p| p.ln()).collect(), r.attention, r.next)
    }
}

#[derive(Debug, Clone)]
pub struct BeamHypothesis<S> {
    /// Output ids, END excluded.
    pub tokens: Vec<usize>,
    /// Sum of token log-probabilities (END included once finished).
    pub log_prob: f64,
    /// Search score: `log_prob` minus accumulated diversity penalties.
    pub score: f64,
    pub trigrams: HashSet<[usize; 3]>,
    /// Argmax attention position at every emitted token.
    pub attn_argmax: Vec<usize>,
    pub finished: bool,
    /// Whether END was emitted (rather than the length limit reached).
    pub ended: bool,
    state: S,
}

impl<S> BeamHypothesis<S> {
    /// Log-probability per decoded token, END counted as a token.
    pub fn normalized_score(&self) -> f64 {
        self.log_prob / (self.tokens.len() + usize::from(self.ended)).max(1) as f64
    }

    fn would_repeat(&self, tok: usize) -> bool {
        let n = self.tokens.len();
        n >= 2 && self.trigrams.contains(&[self.tokens[n - 2], self.tokens[n - 1], tok])
    }
}

/// Beam search. Every expansion creating a trigram already present in its
/// hypothesis is dropped; the `r`-th best expansion of a parent (r from 0)
/// is penalized by `diversity · r` for ranking. Returns at most `k`
/// finished hypotheses sorted by length-normalized log-probability, best
/// first; hypotheses still alive at `max_len` are finished as they are.
pub fn beam_search<M: StepScorer>(model: &M, k: usize, diversity: f64, max_len: usize) -> Vec<BeamHypothesis<M::State>> {
    assert!(k >= 1 && max_len >= 1);
    let mut live = vec![BeamHypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        score: 0.0,
        trigrams: HashSet::new(),
        attn_argmax: Vec::new(),
        finished: false,
        ended: false,
        state: model.initial(),
    }];
    let mut finished: Vec<BeamHypothesis<M::State>> = Vec::new();

    while !live.is_empty() && finished.len() < k {
        // (parent, token, log-prob, score, attention argmax, next state)
        let mut cands: Vec<(usize, usize, f64, f64, usize, usize)> = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (pi, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(START);
            let (logp, attn, next) = model.score(&hyp.state, prev);
            let top_attn = if attn.is_empty() { 0 } else { argmax(&attn) };
            states.push(next);
            let mut options: Vec<usize> = (0..logp.len())
                .filter(|&tok| logp[tok] > f64::NEG_INFINITY && (tok == END || !hyp.would_repeat(tok)))
                .collect();
            options.sort_by(|&a, &b| logp[b].total_cmp(&logp[a]).then(a.cmp(&b)));
            options.truncate(k);
            for (rank, &tok) in options.iter().enumerate() {
                let lp = hyp.log_prob + logp[tok];
                let sc = hyp.score + logp[tok] - diversity * rank as f64;
                cands.push((pi, tok, lp, sc, top_attn, rank));
            }
        }
        cands.sort_by(|a, b| b.3.total_cmp(&a.3).then(a.0.cmp(&b.0)).then(a.5.cmp(&b.5)));
        cands.truncate(k - finished.len());

        let mut next_live = Vec::with_capacity(cands.len());
        for (pi, tok, lp, sc, top_attn, _) in cands {
            let parent = &live[pi];
            let mut h = BeamHypothesis {
                tokens: parent.tokens.clone(),
                log_prob: lp,
                score: sc,
                trigrams: parent.trigrams.clone(),
                attn_argmax: parent.attn_argmax.clone(),
                finished: false,
                ended: false,
                state: states[pi].clone(),
            };
            if tok == END {
                h.finished = true;
                h.ended = true;
                finished.push(h);
                continue;
            }
            let n = h.tokens.len();
            if n >= 2 {
                h.trigrams.insert([h.tokens[n - 2], h.tokens[n - 1], tok]);
            }
            h.tokens.push(tok);
            h.attn_argmax.push(top_attn);
            if h.tokens.len() >= max_len {
                h.finished = true;
                finished.push(h);
            } else {
                next_live.push(h);
            }
        }
        live = next_live;
    }
    finished.sort_by(|a, b| b.normalized_score().total_cmp(&a.normalized_score()));
    finished.truncate(k);
    finished
}

/// Beam width by number of extracted sentences, keeping the number of
/// combinations tractable.
pub fn beam_width_for(n: usize) -> usize {
    assert!(n >= 1);
    match n {
        0..=5 => 5,
        6 => 4,
        7 | 8 => 3,
        _ => 2,
    }
}

/// A decoded sentence as the reranker sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankItem {
    pub tokens: Sentence,
    /// Length-normalized log-probability.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCandidate {
    /// Chosen beam index per sentence.
    pub choice: Vec<usize>,
    pub repeated: usize,
    pub score: f64,
}

/// Total minus distinct `n`-grams over the concatenation of the sentences.
pub fn repeated_ngrams<S: AsRef<[String]>>(sents: &[S], n: usize) -> usize {
    let all: Vec<&String> = sents.iter().flat_map(|s| s.as_ref().iter()).collect();
    let counts = ngram_counts(&all, n);
    counts.values().sum::<usize>() - counts.len()
}

/// Picks one hypothesis per sentence minimizing repeated `n`-grams over the
/// concatenated summary; ties go to the higher summed score, then to the
/// lexicographically smallest choice vector. Beyond `cap` combinations the
/// best hypothesis of each sentence is taken.
pub fn rerank(beams: &[Vec<RerankItem>], n: usize, cap: usize) -> SummaryCandidate {
    assert!(beams.iter().all(|b| !b.is_empty()), "every sentence needs at least one hypothesis");
    let evaluate = |choice: &[usize]| {
        let sents: Vec<&Sentence> = choice.iter().zip(beams).map(|(&c, b)| &b[c].tokens).collect();
        SummaryCandidate {
            choice: choice.to_vec(),
            repeated: repeated_ngrams(&sents, n),
            score: choice.iter().zip(beams).map(|(&c, b)| b[c].score).sum(),
        }
    };
    let total = beams.iter().try_fold(1usize, |acc, b| acc.checked_mul(b.len()));
    if total.is_none_or(|t| t > cap) {
        warn!("{} combinations exceed the rerank cap {cap}; using per-sentence best", total.map_or("too many".into(), |t| t.to_string()));
        let choice: Vec<usize> = beams
            .iter()
            .map(|b| {
                let mut best = 0;
                for (i, it) in b.iter().enumerate() {
                    if it.score > b[best].score {
                        best = i;
                    }
                }
                best
            })
            .collect();
        return evaluate(&choice);
    }
    let mut choice = vec![0usize; beams.len()];
    let mut best = evaluate(&choice);
    loop {
        // odometer increment, last position fastest, so visiting order is
        // lexicographic and strict improvement keeps the earliest choice
        let mut pos = beams.len();
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < beams[pos].len() {
                break;
            }
            choice[pos] = 0;
        }
        let cand = evaluate(&choice);
        if cand.repeated < best.repeated || (cand.repeated == best.repeated && cand.score > best.score) {
            best = cand;
        }
    }
}

/// Decoding settings for the rewriting stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    /// Beam width for sentence counts up to 5; narrower for longer summaries.
    pub beam: usize,
    pub diversity: f64,
    pub max_len: usize,
    /// N of the repeated-N-gram rerank objective.
    pub ngram: usize,
    pub rerank_cap: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam: 5,
            diversity: 1.0,
            max_len: MAX_DECODE_LEN,
            ngram: 2,
            rerank_cap: RERANK_CAP,
        }
    }
}

/// Surface tokens of a hypothesis with the UNK replacement rule.
pub fn hypothesis_tokens<S>(h: &BeamHypothesis<S>, src: &Source, vocab: &Vocabulary) -> Sentence {
    h.tokens
        .iter()
        .zip(&h.attn_argmax)
        .map(|(&tok, &pos)| {
            let mut onehot = vec![0.0; src.len()];
            onehot[pos] = 1.0;
            output_token(src, vocab, tok, &onehot)
        })
        .collect()
}

/// Beam-decodes one sentence into reranker items.
pub fn beam_rewrite(abs: &Abstractor, vocab: &Vocabulary, sentence: &[String], k: usize, cfg: &DecodeConfig) -> Vec<RerankItem> {
    let src = Source::new(sentence, vocab);
    let scorer = AbstractorScorer::new(abs, &src);
    beam_search(&scorer, k, cfg.diversity, cfg.max_len)
        .iter()
        .map(|h| RerankItem {
            tokens: hypothesis_tokens(h, &src, vocab),
            score: h.normalized_score(),
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Applies `f` to every item on `workers` threads; output order follows
/// input order.
pub fn parallel_map<T: Sync, U: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> U + Sync + Send) -> Result<Vec<U>> {
    if workers == 1 {
        return Ok(items.iter().map(f).collect());
    }
    Ok(pool(workers)?.install(|| items.par_iter().map(f).collect()))
}

/// Greedy rewriting of every sentence, concurrently.
pub fn parallel_abstract(sentences: &[Sentence], abs: &Abstractor, vocab: &Vocabulary, workers: usize) -> Result<Vec<Sentence>> {
    parallel_map(sentences, workers, |s| abs.rewrite(s, vocab))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SummarizeMode {
    Greedy,
    Rerank,
    ExtractOnly,
}

/// One output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub id: String,
    pub summary: Vec<String>,
    pub extract_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub extract_indices: Vec<usize>,
    pub sentences: Vec<Sentence>,
}

impl Summary {
    pub fn record(&self, id: &str) -> SummaryRecord {
        SummaryRecord {
            id: id.to_string(),
            summary: self.sentences.iter().map(|s| s.join(" ")).collect(),
            extract_indices: self.extract_indices.clone(),
        }
    }
}

/// Extract-then-rewrite summarizer.
#[derive(Debug, Clone, Copy)]
pub struct Summarizer<'a> {
    pub extractor: &'a AnyExtractor,
    pub abstractor: Option<&'a Abstractor>,
    pub vocab: &'a Vocabulary,
    pub mode: SummarizeMode,
    pub stop: StopRule,
    pub decode: DecodeConfig,
    pub workers: usize,
}

impl Summarizer<'_> {
    pub fn summarize(&self, doc: &Document) -> Result<Summary> {
        if doc.is_empty() {
            return Ok(Summary {
                extract_indices: Vec::new(),
                sentences: Vec::new(),
            });
        }
        let ids: Vec<Vec<usize>> = doc.sentences.iter().map(|s| self.vocab.encode_all(s)).collect();
        let idx = self.extractor.extract(&ids, self.stop);
        let extracted: Vec<Sentence> = idx.iter().map(|&j| doc.sentences[j].clone()).collect();
        let sentences = match (self.mode, self.abstractor) {
            (SummarizeMode::ExtractOnly, _) => extracted,
            (_, None) => return Err(Error::InvalidArgument("rewriting mode needs an abstractor".into())),
            (SummarizeMode::Greedy, Some(abs)) => parallel_abstract(&extracted, abs, self.vocab, self.workers)?,
            (SummarizeMode::Rerank, Some(abs)) => {
                if extracted.is_empty() {
                    Vec::new()
                } else {
                    let k = beam_width_for(extracted.len()).min(self.decode.beam);
                    let beams = parallel_map(&extracted, self.workers, |s| beam_rewrite(abs, self.vocab, s, k, &self.decode))?;
                    let best = rerank(&beams, self.decode.ngram, self.decode.rerank_cap);
                    best.choice.iter().zip(beams).map(|(&c, b)| b[c].tokens.clone()).collect()
                }
            }
        };
        Ok(Summary {
            extract_indices: idx,
            sentences,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub workers: usize,
    pub sentences: usize,
    pub words: usize,
    pub seconds: f64,
    pub words_per_sec: f64,
    pub sentences_per_sec: f64,
}

/// Times greedy rewriting of `sentences` at each worker count; words are
/// counted on the generated output.
pub fn benchmark(sentences: &[Sentence], abs: &Abstractor, vocab: &Vocabulary, workers: &[usize]) -> Result<Vec<BenchmarkRow>> {
    workers
        .iter()
        .map(|&w| {
            let start = Instant::now();
            let out = parallel_abstract(sentences, abs, vocab, w)?;
            let seconds = start.elapsed().as_secs_f64().max(1e-9);
            let words: usize = out.iter().map(Vec::len).sum();
            Ok(BenchmarkRow {
                workers: w,
                sentences: sentences.len(),
                words,
                seconds,
                words_per_sec: words as f64 / seconds,
                sentences_per_sec: sentences.len() as f64 / seconds,
            })
        })
        .collect()
}
