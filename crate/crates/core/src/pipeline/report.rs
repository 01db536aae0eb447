//! Evaluation reports computed from stored summaries, and model comparison
//! tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, SummaryPair};
use crate::decoding::{repeated_ngrams, SummaryRecord};
use crate::error::{Error, Result};
use crate::metrics::{novel_ngram_ratio, rouge_n, rouge_l, stem_all};
use crate::rl::{episode_rewards, Action};

pub const NOVELTY_ORDERS: [usize; 4] = [1, 2, 3, 4];

/// Corpus-level averages for one model's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub docs: usize,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    /// Novel n-gram ratios for n = 1..4.
    pub novelty: [f64; 4],
    /// Tokens per summary.
    pub mean_length: f64,
    pub mean_sentences: f64,
    /// Undiscounted episode reward of the output: ROUGE-L F1 of each
    /// sentence against the reference at the same position plus ROUGE-1 F1
    /// of the whole summary.
    pub mean_reward: f64,
    /// F1 of extracted indices against the ground-truth salient sentences
    /// (synthetic data only).
    pub extraction_f1: Option<f64>,
    /// Fraction of documents whose extracted sentence count is within one of
    /// the reference sentence count.
    pub count_within_one: f64,
    /// Total repeated bigrams over all summaries.
    pub repeated_bigrams: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub models: Vec<ModelReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.name == name)
    }
}

pub fn record_sentences(r: &SummaryRecord) -> Vec<Sentence> {
    r.summary
        .iter()
        .map(|s| s.split_whitespace().map(str::to_string).collect())
        .collect()
}

fn set_f1(predicted: &[usize], gold: &[usize]) -> f64 {
    let mut p = predicted.to_vec();
    p.sort_unstable();
    p.dedup();
    let mut g = gold.to_vec();
    g.sort_unstable();
    g.dedup();
    let hit = p.iter().filter(|i| g.binary_search(i).is_ok()).count();
    if hit == 0 {
        return 0.0;
    }
    let (prec, rec) = (hit as f64 / p.len() as f64, hit as f64 / g.len() as f64);
    2.0 * prec * rec / (prec + rec)
}

/// Scores `records` against the matching `pairs` (joined by id). ROUGE is
/// computed on the concatenated summary; `stem` applies the suffix stripper
/// to both sides first.
pub fn evaluate_outputs(name: &str, records: &[SummaryRecord], pairs: &[SummaryPair], stem: bool) -> Result<ModelReport> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let by_id: HashMap<&str, &SummaryPair> = pairs.iter().map(|p| (p.id(), p)).collect();
    let mut sums = [0.0f64; 10];
    let mut within = 0usize;
    let mut repeated = 0usize;
    let (mut f1_sum, mut f1_n) = (0.0, 0usize);

    for r in records {
        let pair = by_id
            .get(r.id.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("no reference for output `{}`", r.id)))?;
        let hyp_sents = record_sentences(r);
        let refs = &pair.summary;
        let prep = |s: &[Sentence]| -> Vec<String> {
            let flat: Vec<String> = s.iter().flatten().cloned().collect();
            if stem {
                stem_all(&flat)
            } else {
                flat
            }
        };
        let (hyp, reference) = (prep(&hyp_sents), prep(refs));
        sums[0] += rouge_n(&hyp, &reference, 1).f1;
        sums[1] += rouge_n(&hyp, &reference, 2).f1;
        sums[2] += rouge_l(&hyp, &reference).f1;
        for (k, &n) in NOVELTY_ORDERS.iter().enumerate() {
            sums[3 + k] += novel_ngram_ratio(&hyp_sents, &pair.document, n);
        }
        sums[7] += hyp_sents.iter().map(Vec::len).sum::<usize>() as f64;
        sums[8] += hyp_sents.len() as f64;
        let mut actions: Vec<Action> = (0..hyp_sents.len()).map(Action::Select).collect();
        actions.push(Action::Stop);
        sums[9] += episode_rewards(&actions, &hyp_sents, refs).iter().sum::<f64>();
        if r.extract_indices.len().abs_diff(refs.len()) <= 1 {
            within += 1;
        }
        repeated += repeated_ngrams(&hyp_sents, 2);
        if let Some(gold) = &pair.salient {
            f1_sum += set_f1(&r.extract_indices, gold);
            f1_n += 1;
        }
    }
    let n = records.len() as f64;
    Ok(ModelReport {
        name: name.to_string(),
        docs: records.len(),
        rouge_1: sums[0] / n,
        rouge_2: sums[1] / n,
        rouge_l: sums[2] / n,
        novelty: [sums[3] / n, sums[4] / n, sums[5] / n, sums[6] / n],
        mean_length: sums[7] / n,
        mean_sentences: sums[8] / n,
        mean_reward: sums[9] / n,
        extraction_f1: (f1_n == records.len()).then(|| f1_sum / n),
        count_within_one: within as f64 / n,
        repeated_bigrams: repeated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Better {
    Higher,
    Lower,
    Neither,
}

impl ModelReport {
    /// Metric name, value and which direction is better.
    fn metrics(&self) -> Vec<(&'static str, f64, Better)> {
        use Better::*;
        let mut m = vec![
            ("R-1", self.rouge_1, Higher),
            ("R-2", self.rouge_2, Higher),
            ("R-L", self.rouge_l, Higher),
            ("nov-1", self.novelty[0], Neither),
            ("nov-2", self.novelty[1], Neither),
            ("nov-3", self.novelty[2], Neither),
            ("nov-4", self.novelty[3], Neither),
            ("len", self.mean_length, Neither),
            ("sents", self.mean_sentences, Neither),
            ("reward", self.mean_reward, Higher),
        ];
        if let Some(f) = self.extraction_f1 {
            m.push(("ext-F1", f, Higher));
        }
        m.push(("cnt±1", self.count_within_one, Higher));
        m.push(("rep-2", self.repeated_bigrams as f64, Lower));
        m
    }

    pub fn metric_names(&self) -> Vec<&'static str> {
        self.metrics().into_iter().map(|(n, _, _)| n).collect()
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics().into_iter().find(|(n, _, _)| *n == name).map(|(_, v, _)| v)
    }
}

/// Aligned table of `reports`, sorted by `sort_by` (best first; input order
/// on ties). The best value of every directional metric is marked with `*`;
/// tied values are all marked.
pub fn compare_models(reports: &[ModelReport], sort_by: &str) -> Result<String> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument("comparison needs at least two reports".into()));
    }
    let names = reports[0].metric_names();
    for r in &reports[1..] {
        if r.metric_names() != names {
            return Err(Error::MetricMismatch(format!(
                "`{}` has metrics {:?}, `{}` has {:?}",
                reports[0].name,
                names,
                r.name,
                r.metric_names()
            )));
        }
    }
    let sort_dir = reports[0]
        .metrics()
        .into_iter()
        .find(|(n, _, _)| *n == sort_by)
        .map(|(_, _, b)| b)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{sort_by}`; expected one of {names:?}")))?;

    let mut order: Vec<usize> = (0..reports.len()).collect();
    let key = |i: usize| reports[i].metric(sort_by).unwrap_or(f64::NAN);
    order.sort_by(|&a, &b| {
        let c = key(b).total_cmp(&key(a));
        if sort_dir == Better::Lower {
            c.reverse()
        } else {
            c
        }
    });

    let table: Vec<Vec<(f64, Better)>> = reports
        .iter()
        .map(|r| r.metrics().into_iter().map(|(_, v, b)| (v, b)).collect())
        .collect();
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    for (col, &(_, dir)) in table[0].iter().enumerate() {
        let vals = table.iter().map(|row| row[col].0);
        match dir {
            Better::Higher => best.insert(col, vals.fold(f64::NEG_INFINITY, f64::max)),
            Better::Lower => best.insert(col, vals.fold(f64::INFINITY, f64::min)),
            Better::Neither => None,
        };
    }

    let name_w = reports.iter().map(|r| r.name.chars().count()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "model");
    for n in &names {
        let _ = write!(out, " {n:>8}");
    }
    out.push('\n');
    for &i in &order {
        let _ = write!(out, "{:<name_w$}", reports[i].name);
        for (col, &(v, _)) in table[i].iter().enumerate() {
            let cell = if names[col] == "rep-2" { format!("{v:.0}") } else { format!("{v:.4}") };
            let mark = if best.get(&col) == Some(&v) { "*" } else { " " };
            let _ = write!(out, " {cell:>7}{mark}");
        }
        out.push('\n');
    }
    Ok(out)
}
