//! Text ingestion: tokenization, vocabulary, truncation, JSON-lines IO and
//! the synthetic corpus used for desk-scale experiments.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::substrate::rng;

pub type Sentence = Vec<String>;

/// Lowercases and splits on whitespace; every non-alphanumeric character
/// becomes a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>) -> Result<Self> {
        let id = id.into();
        if sentences.is_empty() {
            return Err(Error::InvalidArgument(format!("document `{id}` has no sentences")));
        }
        if sentences.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("document `{id}` has an empty sentence")));
        }
        Ok(Self { id, sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryPair {
    pub document: Document,
    pub summary: Vec<Sentence>,
    /// Ground-truth salient sentence indices, known only for synthetic data.
    pub salient: Option<Vec<usize>>,
}

impl SummaryPair {
    pub fn new(document: Document, summary: Vec<Sentence>) -> Result<Self> {
        if summary.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "pair `{}` has an empty summary",
                document.id
            )));
        }
        Ok(Self {
            document,
            summary,
            salient: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.document.id
    }
}

// ---- vocabulary -----------------------------------------------------------

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const END: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<start>", "<end>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from an explicit token list whose first four entries are the
    /// reserved tokens (the layout stored in checkpoints).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..4].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::InvalidArgument("vocabulary must start with the reserved tokens".into()));
        }
        let index: HashMap<String, usize> = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        if index.len() != tokens.len() {
            return Err(Error::InvalidArgument("duplicate token in vocabulary".into()));
        }
        Ok(Self { tokens, index })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a token; `UNK` when absent. Reserved names are never matched
    /// from text.
    pub fn encode(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) if i >= RESERVED.len() => i,
            _ => UNK,
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.encode(token) != UNK
    }

    pub fn decode(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode_all(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode(t)).collect()
    }
}

/// Keeps the `cap - 4` most frequent tokens of documents and summaries;
/// ties are broken lexicographically.
pub fn build_vocab(pairs: &[SummaryPair], cap: usize) -> Result<Vocabulary> {
    if cap < RESERVED.len() {
        return Err(Error::InvalidArgument(format!("vocabulary cap {cap} < 4")));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for p in pairs {
        for s in p.document.sentences.iter().chain(&p.summary) {
            for t in s {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|(t, _)| !RESERVED.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().take(cap - RESERVED.len()).map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens)
}

/// Cuts document sentences to `max_src` tokens and summary sentences to
/// `max_tgt` tokens.
pub fn truncate_pair(pair: &SummaryPair, max_src: usize, max_tgt: usize) -> SummaryPair {
    assert!(max_src >= 1 && max_tgt >= 1);
    let cut = |s: &Sentence, n: usize| s.iter().take(n).cloned().collect::<Sentence>();
    SummaryPair {
        document: Document {
            id: pair.document.id.clone(),
            sentences: pair.document.sentences.iter().map(|s| cut(s, max_src)).collect(),
        },
        summary: pair.summary.iter().map(|s| cut(s, max_tgt)).collect(),
        salient: pair.salient.clone(),
    }
}

// ---- JSON lines -----------------------------------------------------------

/// One line of the data format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub article: Vec<String>,
    #[serde(rename = "abstract", default)]
    pub abstract_: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salient: Option<Vec<usize>>,
}

fn tokenize_sentences(id: &str, field: &str, sents: &[String]) -> Vec<Sentence> {
    let mut out = Vec::with_capacity(sents.len());
    for (i, s) in sents.iter().enumerate() {
        let toks = tokenize(s);
        if toks.is_empty() {
            warn!("record `{id}`: dropping empty {field} sentence {i}");
        } else {
            out.push(toks);
        }
    }
    out
}

impl RawRecord {
    pub fn to_document(&self) -> Result<Document> {
        Document::new(self.id.clone(), tokenize_sentences(&self.id, "article", &self.article))
    }

    pub fn to_pair(&self) -> Result<SummaryPair> {
        let mut pair = SummaryPair::new(
            self.to_document()?,
            tokenize_sentences(&self.id, "abstract", &self.abstract_),
        )?;
        pair.salient = self.salient.clone();
        Ok(pair)
    }

    pub fn from_pair(pair: &SummaryPair) -> Self {
        Self {
            id: pair.document.id.clone(),
            article: pair.document.sentences.iter().map(|s| s.join(" ")).collect(),
            abstract_: pair.summary.iter().map(|s| s.join(" ")).collect(),
            salient: pair.salient.clone(),
        }
    }
}

/// Reads any JSON-lines file of `T`; blank lines are skipped.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            source: Box::new(e.into()),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<Vec<SummaryPair>> {
    read_jsonl::<RawRecord>(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_pair().map_err(|e| Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    read_jsonl::<RawRecord>(path)?
        .iter()
        .map(RawRecord::to_document)
        .collect()
}

pub fn save_pairs(path: &Path, pairs: &[SummaryPair]) -> Result<()> {
    let recs: Vec<RawRecord> = pairs.iter().map(RawRecord::from_pair).collect();
    write_jsonl(path, &recs)
}

// ---- synthetic corpus -----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub vocab_size: usize,
    pub sents_per_doc: usize,
    pub salient_per_doc: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

// Shape of generated text. Salient sentences are dense in "content" words
// (the first quarter of the vocabulary); other sentences are mostly filler.
const MIN_SENT_LEN: usize = 8;
const MAX_SENT_LEN: usize = 14;
const SALIENT_CONTENT_RATE: f64 = 0.6;
const DISTRACTOR_CONTENT_RATE: f64 = 0.15;
const KEEP_FILLER_RATE: f64 = 0.15;
const MIN_SUMMARY_LEN: usize = 3;

/// Token name for synthetic word `i`.
pub fn synth_token(i: usize, vocab_size: usize) -> String {
    let width = (vocab_size.max(2) - 1).to_string().len();
    format!("w{i:0width$}")
}

/// Generates documents whose reference summaries compress (keep a
/// subsequence of) and then noise exactly one salient sentence each, in
/// document order. Noise replaces a kept token by a random vocabulary token
/// with probability `noise_rate`.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<Vec<SummaryPair>> {
    if cfg.n_docs == 0 || cfg.sents_per_doc == 0 || cfg.salient_per_doc == 0 {
        return Err(Error::InvalidArgument("counts must be positive".into()));
    }
    if cfg.salient_per_doc > cfg.sents_per_doc {
        return Err(Error::InvalidArgument(format!(
            "salient_per_doc {} > sents_per_doc {}",
            cfg.salient_per_doc, cfg.sents_per_doc
        )));
    }
    if cfg.vocab_size < 8 {
        return Err(Error::InvalidArgument("vocab_size must be at least 8".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise_rate) {
        return Err(Error::InvalidArgument("noise_rate must lie in [0, 1]".into()));
    }

    let n_content = cfg.vocab_size / 4;
    let tok = |i: usize| synth_token(i, cfg.vocab_size);
    let mut rng = rng(cfg.seed);
    let mut pairs = Vec::with_capacity(cfg.n_docs);

    for d in 0..cfg.n_docs {
        let mut salient: Vec<usize> = sample(&mut rng, cfg.sents_per_doc, cfg.salient_per_doc).into_vec();
        salient.sort_unstable();
        let salient_set: BTreeSet<usize> = salient.iter().copied().collect();

        // (token id, is content) per position
        let mut sents: Vec<Vec<(usize, bool)>> = Vec::with_capacity(cfg.sents_per_doc);
        for j in 0..cfg.sents_per_doc {
            let len = rng.random_range(MIN_SENT_LEN..=MAX_SENT_LEN);
            let rate = if salient_set.contains(&j) {
                SALIENT_CONTENT_RATE
            } else {
                DISTRACTOR_CONTENT_RATE
            };
            let s = (0..len)
                .map(|_| {
                    if rng.random_bool(rate) {
                        (rng.random_range(0..n_content), true)
                    } else {
                        (rng.random_range(n_content..cfg.vocab_size), false)
                    }
                })
                .collect();
            sents.push(s);
        }

        let mut summary = Vec::with_capacity(salient.len());
        for &j in &salient {
            let src = &sents[j];
            let mut keep: Vec<bool> = src
                .iter()
                .map(|&(_, content)| content || rng.random_bool(KEEP_FILLER_RATE))
                .collect();
            // top up to the minimum length with the earliest dropped tokens
            let mut kept = keep.iter().filter(|&&k| k).count();
            for k in keep.iter_mut() {
                if kept >= MIN_SUMMARY_LEN.min(src.len()) {
                    break;
                }
                if !*k {
                    *k = true;
                    kept += 1;
                }
            }
            let compressed: Vec<String> = src
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(&(t, _), _)| {
                    if cfg.noise_rate > 0.0 && rng.random_bool(cfg.noise_rate) {
                        tok(rng.random_range(0..cfg.vocab_size))
                    } else {
                        tok(t)
                    }
                })
                .collect();
            summary.push(compressed);
        }

        let document = Document {
            id: format!("synth-{d:05}"),
            sentences: sents
                .iter()
                .map(|s| s.iter().map(|&(t, _)| tok(t)).collect())
                .collect(),
        };
        pairs.push(SummaryPair {
            document,
            summary,
            salient: Some(salient),
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(doc: &[&str], summ: &[&str]) -> SummaryPair {
        SummaryPair::new(
            Document::new("d", doc.iter().map(|s| tokenize(s)).collect()).unwrap(),
            summ.iter().map(|s| tokenize(s)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("The cat."), vec!["the", "cat", "."]);
        assert_eq!(tokenize("A  B"), vec!["a", "b"]);
        assert_eq!(tokenize("don't stop!"), vec!["don", "'", "t", "stop", "!"]);
    }

    #[test]
    fn vocab_cap_and_ties() {
        let p = pair(&["a b a b c a b"], &["x"]);
        // a:3 b:3 c:1 x:1 → cap 6 keeps a, b
        let v = build_vocab(&[p.clone()], 6).unwrap();
        assert_eq!(&v.tokens()[4..], &["a", "b"]);
        let big = build_vocab(&[pair(&["a b"], &["a"])], 30_000).unwrap();
        assert_eq!(big.len(), 2 + 4);
        assert_eq!(build_vocab(&[p.clone()], 6).unwrap(), v);
    }

    #[test]
    fn vocab_errors() {
        assert!(matches!(build_vocab(&[], 10), Err(Error::EmptyCorpus)));
        let p = pair(&["a"], &["a"]);
        assert!(build_vocab(&[p], 3).is_err());
    }

    #[test]
    fn vocab_round_trip_and_unk() {
        let v = build_vocab(&[pair(&["alpha beta"], &["gamma"])], 100).unwrap();
        for t in ["alpha", "beta", "gamma"] {
            assert_eq!(v.decode(v.encode(t)), t);
        }
        assert_eq!(v.encode("delta"), UNK);
        assert_eq!(v.encode("<end>"), UNK);
    }

    #[test]
    fn truncation() {
        let long: Vec<String> = (0..150).map(|i| format!("t{i}")).collect();
        let p = SummaryPair::new(
            Document::new("d", vec![long.clone(), long[..5].to_vec()]).unwrap(),
            vec![long[..40].to_vec()],
        )
        .unwrap();
        let t = truncate_pair(&p, 100, 30);
        assert_eq!(t.document.sentences[0], long[..100].to_vec());
        assert_eq!(t.document.sentences[1], long[..5].to_vec());
        assert_eq!(t.summary[0], long[..30].to_vec());
    }

    #[test]
    fn ingestion_drops_empty_sentences() {
        let rec = RawRecord {
            id: "r".into(),
            article: vec!["Hello world.".into(), "   ".into(), "Bye".into()],
            abstract_: vec!["hi".into()],
            salient: None,
        };
        let p = rec.to_pair().unwrap();
        assert_eq!(p.document.sentences.len(), 2);
        let empty = RawRecord {
            id: "e".into(),
            article: vec!["hi".into()],
            abstract_: vec![],
            salient: None,
        };
        assert!(empty.to_pair().is_err());
    }

    fn is_subsequence(sub: &[String], seq: &[String]) -> bool {
        let mut it = seq.iter();
        sub.iter().all(|s| it.any(|t| t == s))
    }

    #[test]
    fn synthetic_noise_free_is_subsequence() {
        let cfg = SynthConfig {
            n_docs: 20,
            vocab_size: 60,
            sents_per_doc: 6,
            salient_per_doc: 2,
            noise_rate: 0.0,
            seed: 11,
        };
        let pairs = generate_synthetic_corpus(&cfg).unwrap();
        assert_eq!(pairs.len(), 20);
        for p in &pairs {
            let sal = p.salient.as_ref().unwrap();
            assert_eq!(p.summary.len(), 2);
            assert_eq!(sal.len(), 2);
            assert!(sal[0] < sal[1]);
            for (s, &j) in p.summary.iter().zip(sal) {
                assert!(is_subsequence(s, &p.document.sentences[j]));
            }
        }
        assert_eq!(generate_synthetic_corpus(&cfg).unwrap(), pairs);
    }

    #[test]
    fn synthetic_invalid_counts() {
        let mut cfg = SynthConfig {
            n_docs: 1,
            vocab_size: 50,
            sents_per_doc: 3,
            salient_per_doc: 4,
            noise_rate: 0.1,
            seed: 0,
        };
        assert!(generate_synthetic_corpus(&cfg).is_err());
        cfg.salient_per_doc = 1;
        cfg.noise_rate = 1.5;
        assert!(generate_synthetic_corpus(&cfg).is_err());
    }
}
