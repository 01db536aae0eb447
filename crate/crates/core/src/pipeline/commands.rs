//! File-to-file operations behind the individual CLI subcommands. The
//! staged [`Experiment`](super::Experiment) runner composes the same
//! library calls over a fixed directory layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::RunConfig;
use super::experiment::{abstractor_examples, extraction_examples, label_all, split_corpus, train_abstractor, train_extractor, tune_k, Arch, MlJob};
use super::models::{self, Loaded, SaveInfo, KIND_ABSTRACTOR, KIND_FF_EXT, KIND_RL, KIND_RNN_EXT};
use super::plot::{curve_summary, curve_svg};
use super::report::{compare_models, evaluate_outputs, record_sentences, EvalReport, ModelReport};
use super::train::TrainLog;
use crate::corpus::{build_vocab, generate_synthetic_corpus, load_pairs, read_jsonl, save_pairs, tokenize, truncate_pair, write_jsonl, SummaryPair, SynthConfig};
use crate::decoding::{benchmark, parallel_map, BenchmarkRow, DecodeConfig, SummarizeMode, Summarizer, SummaryRecord};
use crate::error::{Error, Result};
use crate::metrics::novel_ngram_ratio;
use crate::proxy::ProxyLabels;
use crate::rl::{read_curve_csv, train_rl, write_curve_csv, RlExample, RlOutcome};
use crate::extractor::StopRule;

/// Writes a synthetic corpus as JSON lines; returns the number of pairs.
pub fn synth_data(cfg: &SynthConfig, out: &Path) -> Result<usize> {
    let pairs = generate_synthetic_corpus(cfg)?;
    save_pairs(out, &pairs)?;
    Ok(pairs.len())
}

pub fn make_labels(data: &Path, out: &Path) -> Result<usize> {
    let pairs = load_pairs(data)?;
    let labels = label_all(&pairs);
    write_jsonl(out, &labels)?;
    Ok(labels.len())
}

/// Training pairs (truncated) and a seeded validation hold-out.
fn train_val(cfg: &RunConfig, data: &Path) -> Result<(Vec<SummaryPair>, Vec<SummaryPair>)> {
    let d = &cfg.data;
    let pairs: Vec<SummaryPair> = load_pairs(data)?
        .iter()
        .map(|p| truncate_pair(p, d.max_src_len, d.max_tgt_len))
        .collect();
    let s = split_corpus(pairs, d.val_fraction, 0.0, cfg.sub_seed(0))?;
    Ok((s.train, s.val))
}

fn read_labels(path: &Path) -> Result<Vec<ProxyLabels>> {
    read_jsonl(path)
}

/// Trains an extractor on `data` with proxy labels from `labels`; the
/// vocabulary is built from the training portion.
pub fn train_extractor_files(cfg: &RunConfig, arch: Arch, data: &Path, labels: &Path, out_ckpt: &Path) -> Result<TrainLog> {
    let (train, val) = train_val(cfg, data)?;
    let labels = read_labels(labels)?;
    let vocab = build_vocab(&train, cfg.data.vocab_cap)?;
    let tr = extraction_examples(&train, &labels, &vocab)?;
    let va = extraction_examples(&val, &labels, &vocab)?;
    let job = MlJob::from_config(cfg, cfg.sub_seed(3), cfg.sub_seed(5));
    let t = train_extractor(arch, &job, &vocab, &tr, &va)?;
    let val_rl: Vec<RlExample> = val.iter().map(|p| RlExample::build(p, &vocab, None)).collect();
    let k = match cfg.extract.k {
        0 => tune_k(&t.model, &val_rl, cfg.extract.max_k),
        k => k,
    };
    models::save_extractor(
        out_ckpt,
        &t.model,
        k,
        SaveInfo {
            config_hash: &cfg.hash(),
            vocab: &vocab,
            optimizer: Some(t.optimizer),
            meta: BTreeMap::from([("train_log".to_string(), json!(t.log))]),
        },
    )?;
    Ok(t.log)
}

pub fn train_abstractor_files(cfg: &RunConfig, data: &Path, labels: &Path, out_ckpt: &Path) -> Result<TrainLog> {
    let (train, val) = train_val(cfg, data)?;
    let labels = read_labels(labels)?;
    let vocab = build_vocab(&train, cfg.data.vocab_cap)?;
    let tr = abstractor_examples(&train, &labels)?;
    let va = abstractor_examples(&val, &labels)?;
    let job = MlJob::from_config(cfg, cfg.sub_seed(1), cfg.sub_seed(2));
    let t = train_abstractor(&job, &vocab, &tr, &va)?;
    models::save_abstractor(
        out_ckpt,
        &t.model,
        SaveInfo {
            config_hash: &cfg.hash(),
            vocab: &vocab,
            optimizer: Some(t.optimizer),
            meta: BTreeMap::from([("train_log".to_string(), json!(t.log))]),
        },
    )?;
    Ok(t.log)
}

/// `{"id", "extract_indices"}` per document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub id: String,
    pub extract_indices: Vec<usize>,
}

/// Runs an extractor checkpoint over every document in `data`. `k = None`
/// stops with EOE (capped by the config).
pub fn extract_file(cfg: &RunConfig, ckpt: &Path, data: &Path, k: Option<usize>) -> Result<Vec<ExtractionRecord>> {
    let l = Loaded::read(ckpt, &[KIND_RNN_EXT, KIND_FF_EXT, KIND_RL], None, false)?;
    let ext = l.extractor()?;
    let rule = match k {
        Some(k) => StopRule::FixedK(k),
        None => StopRule::Eoe { cap: cfg.extract.cap },
    };
    Ok(load_pairs(data)?
        .iter()
        .map(|p| {
            let ids: Vec<Vec<usize>> = p.document.sentences.iter().map(|s| l.vocab.encode_all(s)).collect();
            ExtractionRecord {
                id: p.id().to_string(),
                extract_indices: ext.extract(&ids, rule),
            }
        })
        .collect())
}

/// Greedy rewrite of one raw sentence.
pub fn rewrite_text(ckpt: &Path, sentence: &str) -> Result<String> {
    let l = Loaded::read(ckpt, &[KIND_ABSTRACTOR], None, false)?;
    let abs = l.abstractor()?;
    let toks = tokenize(sentence);
    if toks.is_empty() {
        return Ok(String::new());
    }
    Ok(abs.rewrite(&toks, &l.vocab).join(" "))
}

/// RL fine-tuning from an extractor (or earlier RL) checkpoint against a
/// frozen abstractor. Writes the actor-critic checkpoint and the reward
/// curve.
pub fn train_rl_files(cfg: &RunConfig, actor_ckpt: &Path, abs_ckpt: &Path, data: &Path, out_ckpt: &Path, log_csv: &Path) -> Result<RlOutcome> {
    let ext_l = Loaded::read(actor_ckpt, &[KIND_RNN_EXT, KIND_RL], None, false)?;
    let abs_l = Loaded::read(abs_ckpt, &[KIND_ABSTRACTOR], None, false)?;
    if ext_l.vocab != abs_l.vocab {
        return Err(Error::Checkpoint("actor and abstractor vocabularies differ".into()));
    }
    let vocab = &abs_l.vocab;
    let abs = abs_l.abstractor()?;
    let ac = ext_l.actor_critic(cfg.sub_seed(8))?;
    let (train, val) = train_val(cfg, data)?;
    let build = |ps: &[SummaryPair]| parallel_map(ps, cfg.workers, |p| RlExample::build(p, vocab, Some(&abs)));
    let out = train_rl(ac, &build(&train)?, &build(&val)?, &cfg.rl_config())?;
    write_curve_csv(log_csv, &out.curve)?;
    models::save_actor_critic(
        out_ckpt,
        &out.best,
        SaveInfo {
            config_hash: &cfg.hash(),
            vocab,
            optimizer: None,
            meta: BTreeMap::from([("best_val_reward".to_string(), json!(out.best_val_reward))]),
        },
    )?;
    Ok(out)
}

/// Writes `<out>` as an SVG and returns a text summary of the curve.
pub fn plot_curve(log_csv: &Path, out: &Path) -> Result<String> {
    let curve = read_curve_csv(log_csv)?;
    fs::write(out, curve_svg(&curve))?;
    Ok(curve_summary(&curve))
}

#[derive(Debug, Clone)]
pub struct SummarizeArgs<'a> {
    pub ext_ckpt: &'a Path,
    pub abs_ckpt: Option<&'a Path>,
    pub data: &'a Path,
    pub mode: SummarizeMode,
    /// Fixed extraction count; `None` uses EOE for RL checkpoints and the
    /// tuned `k` otherwise.
    pub k: Option<usize>,
    pub workers: usize,
    pub decode: DecodeConfig,
    pub cap: usize,
}

pub fn summarize_file(a: &SummarizeArgs<'_>) -> Result<Vec<SummaryRecord>> {
    let ext_l = Loaded::read(a.ext_ckpt, &[KIND_RNN_EXT, KIND_FF_EXT, KIND_RL], None, false)?;
    let ext = ext_l.extractor()?;
    let abs_l = a.abs_ckpt.map(|p| Loaded::read(p, &[KIND_ABSTRACTOR], None, false)).transpose()?;
    if let Some(l) = &abs_l {
        if l.vocab != ext_l.vocab {
            return Err(Error::Checkpoint("extractor and abstractor vocabularies differ".into()));
        }
    }
    let abs = abs_l.as_ref().map(Loaded::abstractor).transpose()?;
    let stop = match (a.k, ext_l.ckpt.kind.as_str()) {
        (Some(k), _) => StopRule::FixedK(k),
        (None, KIND_RL) => StopRule::Eoe { cap: a.cap },
        (None, _) => StopRule::FixedK(ext_l.meta_usize("k").unwrap_or(3)),
    };
    let s = Summarizer {
        extractor: &ext,
        abstractor: abs.as_ref(),
        vocab: &ext_l.vocab,
        mode: a.mode,
        stop,
        decode: a.decode,
        workers: a.workers,
    };
    super::experiment::summarize_all(&s, &load_pairs(a.data)?)
}

/// Times rewriting of the first `max_sentences` document sentences of
/// `data` at each worker count.
pub fn benchmark_file(abs_ckpt: &Path, data: &Path, workers: &[usize], max_sentences: usize) -> Result<Vec<BenchmarkRow>> {
    let l = Loaded::read(abs_ckpt, &[KIND_ABSTRACTOR], None, false)?;
    let abs = l.abstractor()?;
    let sents: Vec<_> = load_pairs(data)?
        .into_iter()
        .flat_map(|p| p.document.sentences)
        .take(max_sentences)
        .collect();
    if sents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    benchmark(&sents, &abs, &l.vocab, workers)
}

/// ROUGE table for stored outputs, with novelty at the requested orders.
pub fn evaluate_files(hyp: &Path, reference: &Path, stem: bool, novel: &[usize]) -> Result<(ModelReport, Vec<(usize, f64)>)> {
    let records: Vec<SummaryRecord> = read_jsonl(hyp)?;
    let pairs = load_pairs(reference)?;
    let name = hyp.file_stem().map_or("hyp".into(), |s| s.to_string_lossy().into_owned());
    let report = evaluate_outputs(&name, &records, &pairs, stem)?;
    let by_id: BTreeMap<&str, &SummaryPair> = pairs.iter().map(|p| (p.id(), p)).collect();
    let mut ratios = Vec::new();
    for &n in novel {
        if n == 0 {
            return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
        }
        let total: f64 = records
            .iter()
            .filter_map(|r| by_id.get(r.id.as_str()).map(|p| novel_ngram_ratio(&record_sentences(r), &p.document, n)))
            .sum();
        ratios.push((n, total / records.len() as f64));
    }
    Ok((report, ratios))
}

/// Comparison table over the models of several stored reports.
pub fn compare_files(reports: &[&Path], sort_by: &str) -> Result<String> {
    let mut models = Vec::new();
    for p in reports {
        let r: EvalReport = serde_json::from_str(&fs::read_to_string(p)?)?;
        models.extend(r.models);
    }
    compare_models(&models, sort_by)
}
