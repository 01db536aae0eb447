//! Stage-by-stage experiment runner over an output directory.
//!
//! ```text
//! <out>/config.toml               effective configuration
//! <out>/data/{train,val,test}.jsonl
//! <out>/vocab.json
//! <out>/labels/{train,val}.jsonl
//! <out>/ckpt/{abstractor,rnn-ext,ff-ext,rl}.ckpt
//! <out>/logs/{abstractor,rnn-ext,ff-ext}.json, rl-curve.csv
//! <out>/outputs/<model>.jsonl
//! <out>/reports/{eval.json,comparison.txt}
//! <out>/timing.json               wall-clock seconds per stage
//! ```
//!
//! Everything except `timing.json` is a deterministic function of the
//! configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::RunConfig;
use super::models::{self, Loaded, SaveInfo, KIND_ABSTRACTOR, KIND_FF_EXT, KIND_RL, KIND_RNN_EXT};
use super::report::{compare_models, evaluate_outputs, EvalReport};
use super::train::{train_ml, AbstractorTrainer, ExtractionExample, MlSettings, TrainLog};
use crate::abstractor::Abstractor;
use crate::corpus::{build_vocab, generate_synthetic_corpus, load_pairs, read_jsonl, save_pairs, truncate_pair, write_jsonl, Sentence, SummaryPair, Vocabulary};
use crate::decoding::{parallel_map, SummarizeMode, Summarizer, SummaryRecord};
use crate::error::{Error, Result};
use crate::extractor::{AnyExtractor, Extractor, ExtractorConfig, FfExtractor, StopRule};
use crate::proxy::{build_abstractor_pairs, match_proxy_labels, ProxyLabels};
use crate::rl::{episode_rewards, train_rl, write_curve_csv, Action, RlExample};
use crate::substrate::{rng, OptimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    MlAbs,
    MlExt,
    Rl,
    Eval,
    All,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::MlAbs => "ml-abs",
            Stage::MlExt => "ml-ext",
            Stage::Rl => "rl",
            Stage::Eval => "eval",
            Stage::All => "all",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Rnn,
    Ff,
}

/// Evaluated model variants, in report order.
pub const MODEL_FF: &str = "ff-ext";
pub const MODEL_RNN: &str = "rnn-ext";
pub const MODEL_RNN_ABS: &str = "rnn-ext+abs";
pub const MODEL_RL: &str = "rnn-ext+abs+RL";
pub const MODEL_RL_RERANK: &str = "rnn-ext+abs+RL+rerank";

/// Paths inside an experiment directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn data(&self, split: &str) -> PathBuf {
        self.root.join("data").join(format!("{split}.jsonl"))
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.json")
    }

    pub fn labels(&self, split: &str) -> PathBuf {
        self.root.join("labels").join(format!("{split}.jsonl"))
    }

    pub fn ckpt(&self, kind: &str) -> PathBuf {
        self.root.join("ckpt").join(format!("{kind}.ckpt"))
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(name)
    }

    pub fn output(&self, model: &str) -> PathBuf {
        self.root.join("outputs").join(format!("{model}.jsonl"))
    }

    pub fn eval_report(&self) -> PathBuf {
        self.root.join("reports").join("eval.json")
    }

    pub fn comparison(&self) -> PathBuf {
        self.root.join("reports").join("comparison.txt")
    }

    pub fn timing(&self) -> PathBuf {
        self.root.join("timing.json")
    }
}

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<SummaryPair>,
    pub val: Vec<SummaryPair>,
    pub test: Vec<SummaryPair>,
}

/// Seeded shuffle, then the first `test_fraction` go to test and the next
/// `val_fraction` to validation. Each held-out split gets at least one pair
/// when its fraction is positive and the corpus is large enough.
pub fn split_corpus(mut pairs: Vec<SummaryPair>, val_fraction: f64, test_fraction: f64, seed: u64) -> Result<Splits> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    pairs.shuffle(&mut rng(seed));
    let n = pairs.len();
    let count = |f: f64| if f > 0.0 { ((n as f64 * f).round() as usize).max(1) } else { 0 };
    let n_test = count(test_fraction);
    let n_val = count(val_fraction);
    if n_test + n_val >= n {
        return Err(Error::InvalidArgument(format!("{n} pairs are too few for the requested splits")));
    }
    let train = pairs.split_off(n_test + n_val);
    let val = pairs.split_off(n_test);
    Ok(Splits { train, val, test: pairs })
}

pub fn label_all(pairs: &[SummaryPair]) -> Vec<ProxyLabels> {
    pairs.iter().map(match_proxy_labels).collect()
}

/// Matches labels to pairs by id.
fn labels_for<'a>(pairs: &[SummaryPair], labels: &'a [ProxyLabels]) -> Result<Vec<&'a ProxyLabels>> {
    let by_id: BTreeMap<&str, &ProxyLabels> = labels.iter().map(|l| (l.id.as_str(), l)).collect();
    pairs
        .iter()
        .map(|p| {
            by_id
                .get(p.id())
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("no labels for pair `{}`", p.id())))
        })
        .collect()
}

pub fn extraction_examples(pairs: &[SummaryPair], labels: &[ProxyLabels], vocab: &Vocabulary) -> Result<Vec<ExtractionExample>> {
    let ls = labels_for(pairs, labels)?;
    Ok(pairs
        .iter()
        .zip(ls)
        .map(|(p, l)| (p.document.sentences.iter().map(|s| vocab.encode_all(s)).collect(), l.indices.clone()))
        .collect())
}

pub fn abstractor_examples(pairs: &[SummaryPair], labels: &[ProxyLabels]) -> Result<Vec<(Sentence, Sentence)>> {
    let ls = labels_for(pairs, labels)?;
    let mut out = Vec::new();
    for (p, l) in pairs.iter().zip(ls) {
        out.extend(build_abstractor_pairs(p, l)?);
    }
    Ok(out)
}

/// Hyperparameters of the ML stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlJob {
    pub emb_dim: usize,
    pub hidden: usize,
    pub conv_filters: usize,
    pub settings: MlSettings,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl MlJob {
    pub fn from_config(cfg: &RunConfig, init_seed: u64, shuffle_seed: u64) -> Self {
        Self {
            emb_dim: cfg.model.emb_dim,
            hidden: cfg.model.hidden,
            conv_filters: cfg.model.conv_filters,
            settings: cfg.optim,
            init_seed,
            shuffle_seed,
        }
    }

    fn extractor_config(&self, vocab_size: usize) -> ExtractorConfig {
        ExtractorConfig {
            vocab_size,
            emb_dim: self.emb_dim,
            conv_filters: self.conv_filters,
            hidden: self.hidden,
        }
    }
}

pub struct Trained<M> {
    pub model: M,
    pub log: TrainLog,
    pub optimizer: OptimState,
}

pub fn train_abstractor(
    job: &MlJob,
    vocab: &Vocabulary,
    train: &[(Sentence, Sentence)],
    val: &[(Sentence, Sentence)],
) -> Result<Trained<Abstractor>> {
    let cfg = crate::abstractor::AbstractorConfig {
        vocab_size: vocab.len(),
        emb_dim: job.emb_dim,
        hidden: job.hidden,
    };
    let mut trainer = AbstractorTrainer {
        model: Abstractor::new(cfg, job.init_seed),
        vocab: vocab.clone(),
    };
    let (log, optimizer) = train_ml(&mut trainer, train, val, &job.settings, job.shuffle_seed)?;
    Ok(Trained {
        model: trainer.model,
        log,
        optimizer,
    })
}

pub fn train_extractor(
    arch: Arch,
    job: &MlJob,
    vocab: &Vocabulary,
    train: &[ExtractionExample],
    val: &[ExtractionExample],
) -> Result<Trained<AnyExtractor>> {
    let cfg = job.extractor_config(vocab.len());
    Ok(match arch {
        Arch::Rnn => {
            let mut m = Extractor::new(cfg, job.init_seed);
            let (log, optimizer) = train_ml(&mut m, train, val, &job.settings, job.shuffle_seed)?;
            Trained {
                model: AnyExtractor::Rnn(m),
                log,
                optimizer,
            }
        }
        Arch::Ff => {
            let mut m = FfExtractor::new(cfg, job.init_seed);
            let (log, optimizer) = train_ml(&mut m, train, val, &job.settings, job.shuffle_seed)?;
            Trained {
                model: AnyExtractor::Ff(m),
                log,
                optimizer,
            }
        }
    })
}

/// Mean episode reward of a fixed-`k` extraction closed by a stop.
pub fn fixed_k_reward(ext: &AnyExtractor, examples: &[RlExample], k: usize) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let total: f64 = examples
        .iter()
        .map(|ex| {
            let mut a: Vec<Action> = ext.extract(&ex.doc_ids, StopRule::FixedK(k)).into_iter().map(Action::Select).collect();
            a.push(Action::Stop);
            episode_rewards(&a, &ex.rewritten, &ex.refs).iter().sum::<f64>()
        })
        .sum();
    total / examples.len() as f64
}

/// The `k` in `1..=max_k` with the highest validation reward (smallest on
/// ties).
pub fn tune_k(ext: &AnyExtractor, val: &[RlExample], max_k: usize) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..=max_k.max(1) {
        let r = fixed_k_reward(ext, val, k);
        info!("k = {k}: validation reward {r:.4}");
        if r > best.1 {
            best = (k, r);
        }
    }
    best.0
}

/// Runs the pipeline stages of one configuration inside one directory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: RunConfig,
    pub hash: String,
    pub layout: Layout,
    /// Accept checkpoints written under a different configuration.
    pub allow_mismatch: bool,
}

/// Data shared by all stages.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub splits: Splits,
    /// Training and validation pairs after length truncation.
    pub train: Vec<SummaryPair>,
    pub val: Vec<SummaryPair>,
    pub vocab: Vocabulary,
    pub train_labels: Vec<ProxyLabels>,
    pub val_labels: Vec<ProxyLabels>,
}

impl Experiment {
    pub fn new(cfg: RunConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        if cfg.data.corpus.is_none() && cfg.data.synthetic.is_none() {
            return Err(Error::Config("data: set either `corpus` or `synthetic`".into()));
        }
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            layout: Layout::new(out_dir),
            allow_mismatch: false,
        })
    }

    /// Runs `stage` (or every stage in order) and records its wall-clock
    /// time.
    pub fn run(&self, stage: Stage) -> Result<Option<EvalReport>> {
        if stage == Stage::All {
            for s in [Stage::MlAbs, Stage::MlExt, Stage::Rl] {
                self.run(s)?;
            }
            return self.run(Stage::Eval);
        }
        fs::create_dir_all(&self.layout.root)?;
        fs::write(self.layout.config(), self.cfg.to_toml()?)?;
        let start = Instant::now();
        let out = match stage {
            Stage::MlAbs => self.ml_abs().map(|_| None),
            Stage::MlExt => self.ml_ext().map(|_| None),
            Stage::Rl => self.rl().map(|_| None),
            Stage::Eval => self.eval().map(Some),
            Stage::All => unreachable!(),
        }?;
        self.record_time(stage, start.elapsed().as_secs_f64())?;
        Ok(out)
    }

    fn record_time(&self, stage: Stage, seconds: f64) -> Result<()> {
        let path = self.layout.timing();
        let mut t: BTreeMap<String, f64> = match fs::read_to_string(&path) {
            Ok(s) => serde_json::from_str(&s)?,
            Err(_) => BTreeMap::new(),
        };
        t.insert(stage.to_string(), seconds);
        fs::write(path, serde_json::to_string_pretty(&t)?)?;
        Ok(())
    }

    /// Loads or generates the corpus, splits it, builds the vocabulary and
    /// proxy labels, and writes them under `data/`, `labels/` and
    /// `vocab.json`.
    pub fn prepare(&self) -> Result<Prepared> {
        let d = &self.cfg.data;
        let pairs = match (&d.synthetic, &d.corpus) {
            (Some(s), _) => generate_synthetic_corpus(s)?,
            (None, Some(p)) => load_pairs(p)?,
            (None, None) => unreachable!("checked in Experiment::new"),
        };
        let splits = split_corpus(pairs, d.val_fraction, d.test_fraction, self.cfg.sub_seed(0))?;
        let trunc = |ps: &[SummaryPair]| -> Vec<SummaryPair> { ps.iter().map(|p| truncate_pair(p, d.max_src_len, d.max_tgt_len)).collect() };
        let (train, val) = (trunc(&splits.train), trunc(&splits.val));
        let vocab = build_vocab(&train, d.vocab_cap)?;
        let train_labels = label_all(&train);
        let val_labels = label_all(&val);

        let l = &self.layout;
        save_pairs(&l.data("train"), &splits.train)?;
        save_pairs(&l.data("val"), &splits.val)?;
        save_pairs(&l.data("test"), &splits.test)?;
        fs::write(l.vocab(), serde_json::to_string(vocab.tokens())?)?;
        write_jsonl(&l.labels("train"), &train_labels)?;
        write_jsonl(&l.labels("val"), &val_labels)?;
        Ok(Prepared {
            splits,
            train,
            val,
            vocab,
            train_labels,
            val_labels,
        })
    }

    fn save_log(&self, name: &str, log: &TrainLog) -> Result<()> {
        let p = self.layout.log(name);
        fs::create_dir_all(p.parent().expect("log dir"))?;
        fs::write(p, serde_json::to_string_pretty(log)?)?;
        Ok(())
    }

    fn require(&self, stage: Stage, missing: &str, kind: &str, kinds: &[&str]) -> Result<Loaded> {
        let path = self.layout.ckpt(kind);
        if !path.exists() {
            return Err(Error::MissingStage {
                stage: stage.to_string(),
                missing: missing.to_string(),
                path,
            });
        }
        Loaded::read(&path, kinds, Some(&self.hash), self.allow_mismatch)
    }

    fn ml_abs(&self) -> Result<()> {
        let p = self.prepare()?;
        let train = abstractor_examples(&p.train, &p.train_labels)?;
        let val = abstractor_examples(&p.val, &p.val_labels)?;
        info!("abstractor: {} training pairs, {} validation pairs", train.len(), val.len());
        let job = MlJob::from_config(&self.cfg, self.cfg.sub_seed(1), self.cfg.sub_seed(2));
        let t = train_abstractor(&job, &p.vocab, &train, &val)?;
        self.save_log("abstractor.json", &t.log)?;
        let meta = BTreeMap::from([("train_log".to_string(), json!(t.log))]);
        models::save_abstractor(
            &self.layout.ckpt(KIND_ABSTRACTOR),
            &t.model,
            SaveInfo {
                config_hash: &self.hash,
                vocab: &p.vocab,
                optimizer: Some(t.optimizer),
                meta,
            },
        )
    }

    fn ml_ext(&self) -> Result<()> {
        let p = self.prepare()?;
        let train = extraction_examples(&p.train, &p.train_labels, &p.vocab)?;
        let val = extraction_examples(&p.val, &p.val_labels, &p.vocab)?;
        let val_rl: Vec<RlExample> = p.val.iter().map(|x| RlExample::build(x, &p.vocab, None)).collect();
        for (arch, kind, seeds) in [(Arch::Rnn, KIND_RNN_EXT, (3, 5)), (Arch::Ff, KIND_FF_EXT, (6, 7))] {
            let job = MlJob::from_config(&self.cfg, self.cfg.sub_seed(seeds.0), self.cfg.sub_seed(seeds.1));
            let t = train_extractor(arch, &job, &p.vocab, &train, &val)?;
            let k = match self.cfg.extract.k {
                0 => tune_k(&t.model, &val_rl, self.cfg.extract.max_k),
                k => k,
            };
            info!("{kind}: k = {k}");
            self.save_log(&format!("{kind}.json"), &t.log)?;
            let meta = BTreeMap::from([("train_log".to_string(), json!(t.log))]);
            models::save_extractor(
                &self.layout.ckpt(kind),
                &t.model,
                k,
                SaveInfo {
                    config_hash: &self.hash,
                    vocab: &p.vocab,
                    optimizer: Some(t.optimizer),
                    meta,
                },
            )?;
        }
        Ok(())
    }

    fn rl(&self) -> Result<()> {
        let abs_l = self.require(Stage::Rl, "ml-abs", KIND_ABSTRACTOR, &[KIND_ABSTRACTOR])?;
        let ext_l = self.require(Stage::Rl, "ml-ext", KIND_RNN_EXT, &[KIND_RNN_EXT])?;
        let p = self.prepare()?;
        if abs_l.vocab != p.vocab || ext_l.vocab != p.vocab {
            return Err(Error::Checkpoint("checkpoint vocabulary differs from the prepared data".into()));
        }
        let abs = abs_l.abstractor()?;
        let ac = ext_l.actor_critic(self.cfg.sub_seed(8))?;
        let build = |ps: &[SummaryPair]| parallel_map(ps, self.cfg.workers, |x| RlExample::build(x, &p.vocab, Some(&abs)));
        let train = build(&p.train)?;
        let val = build(&p.val)?;
        let rc = self.cfg.rl_config();
        let out = train_rl(ac, &train, &val, &rc)?;
        let curve_path = self.layout.log("rl-curve.csv");
        fs::create_dir_all(curve_path.parent().expect("log dir"))?;
        write_curve_csv(&curve_path, &out.curve)?;
        let meta = BTreeMap::from([
            ("best_val_reward".to_string(), json!(out.best_val_reward)),
            ("curve".to_string(), json!(out.curve)),
        ]);
        models::save_actor_critic(
            &self.layout.ckpt(KIND_RL),
            &out.best,
            SaveInfo {
                config_hash: &self.hash,
                vocab: &p.vocab,
                optimizer: None,
                meta,
            },
        )
    }

    fn eval(&self) -> Result<EvalReport> {
        let abs_l = self.require(Stage::Eval, "ml-abs", KIND_ABSTRACTOR, &[KIND_ABSTRACTOR])?;
        let rnn_l = self.require(Stage::Eval, "ml-ext", KIND_RNN_EXT, &[KIND_RNN_EXT])?;
        let ff_l = self.require(Stage::Eval, "ml-ext", KIND_FF_EXT, &[KIND_FF_EXT])?;
        let rl_l = self.require(Stage::Eval, "rl", KIND_RL, &[KIND_RL])?;
        let p = self.prepare()?;
        let vocab = &p.vocab;
        let abs = abs_l.abstractor()?;
        let rnn = rnn_l.extractor()?;
        let ff = ff_l.extractor()?;
        let rl = rl_l.extractor()?;
        let k_rnn = rnn_l.meta_usize("k").unwrap_or(self.cfg.extract.max_k);
        let k_ff = ff_l.meta_usize("k").unwrap_or(self.cfg.extract.max_k);
        let eoe = StopRule::Eoe { cap: self.cfg.extract.cap };

        let variants: [(&str, &AnyExtractor, SummarizeMode, StopRule); 5] = [
            (MODEL_FF, &ff, SummarizeMode::ExtractOnly, StopRule::FixedK(k_ff)),
            (MODEL_RNN, &rnn, SummarizeMode::ExtractOnly, StopRule::FixedK(k_rnn)),
            (MODEL_RNN_ABS, &rnn, SummarizeMode::Greedy, StopRule::FixedK(k_rnn)),
            (MODEL_RL, &rl, SummarizeMode::Greedy, eoe),
            (MODEL_RL_RERANK, &rl, SummarizeMode::Rerank, eoe),
        ];
        for (name, ext, mode, stop) in variants {
            let s = Summarizer {
                extractor: ext,
                abstractor: Some(&abs),
                vocab,
                mode,
                stop,
                decode: self.cfg.decode,
                workers: self.cfg.workers,
            };
            let records = summarize_all(&s, &p.splits.test)?;
            write_jsonl(&self.layout.output(name), &records)?;
            info!("{name}: wrote {} summaries", records.len());
        }
        self.evaluate_stored()
    }

    /// Recomputes the report from `outputs/` and the stored test split and
    /// writes `reports/`.
    pub fn evaluate_stored(&self) -> Result<EvalReport> {
        let test = load_pairs(&self.layout.data("test"))?;
        let mut models = Vec::new();
        for name in [MODEL_FF, MODEL_RNN, MODEL_RNN_ABS, MODEL_RL, MODEL_RL_RERANK] {
            let records: Vec<SummaryRecord> = read_jsonl(&self.layout.output(name))?;
            models.push(evaluate_outputs(name, &records, &test, false)?);
        }
        let report = EvalReport {
            config_hash: self.hash.clone(),
            models,
        };
        let path = self.layout.eval_report();
        fs::create_dir_all(path.parent().expect("report dir"))?;
        fs::write(&path, report.to_json()?)?;
        fs::write(self.layout.comparison(), compare_models(&report.models, "reward")?)?;
        Ok(report)
    }
}

/// Summarizes every document of `pairs` in order.
pub fn summarize_all(s: &Summarizer<'_>, pairs: &[SummaryPair]) -> Result<Vec<SummaryRecord>> {
    pairs
        .iter()
        .map(|p| Ok(s.summarize(&p.document)?.record(p.id())))
        .collect()
}

/// Reads a stored report.
pub fn read_report(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

