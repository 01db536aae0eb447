//! ROUGE-N, ROUGE-L and novel n-gram ratios.
//!
//! All scorers are generic over the token type so the same code runs on
//! strings (evaluation) and on ids. An empty hypothesis or reference scores 0.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    fn from_counts(matches: usize, hyp_total: usize, ref_total: usize) -> Self {
        if hyp_total == 0 || ref_total == 0 {
            return Self::default();
        }
        Self::from_pr(matches as f64 / hyp_total as f64, matches as f64 / ref_total as f64)
    }
}

/// All contiguous n-grams with multiplicity.
pub fn ngram_counts<T: Eq + Hash + Clone>(tokens: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    assert!(n >= 1, "n must be at least 1");
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    out
}

/// ROUGE-N with clipped (multiset-intersection) counts.
pub fn rouge_n<T: Eq + Hash + Clone>(hyp: &[T], reference: &[T], n: usize) -> RougeScore {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches: usize = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(
        matches,
        hyp.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence-level ROUGE-L: recall = LCS/|ref|, precision = LCS/|hyp|.
pub fn rouge_l<T: Eq>(hyp: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(hyp, reference), hyp.len(), reference.len())
}

/// Scores concatenated hypothesis sentences against concatenated reference
/// sentences with a sentence-level scorer.
pub fn summary_score<T, F>(hyp_sents: &[Vec<T>], ref_sents: &[Vec<T>], scorer: F) -> RougeScore
where
    T: Clone,
    F: Fn(&[T], &[T]) -> RougeScore,
{
    let hyp: Vec<T> = hyp_sents.iter().flatten().cloned().collect();
    let reference: Vec<T> = ref_sents.iter().flatten().cloned().collect();
    scorer(&hyp, &reference)
}

/// ROUGE-L over concatenated sentences.
pub fn rouge_l_summary<T: Eq + Clone>(hyp_sents: &[Vec<T>], ref_sents: &[Vec<T>]) -> RougeScore {
    summary_score(hyp_sents, ref_sents, rouge_l)
}

/// ROUGE-1 over concatenated sentences (the stop-action reward).
pub fn rouge_1_summary<T: Eq + Hash + Clone>(hyp_sents: &[Vec<T>], ref_sents: &[Vec<T>]) -> RougeScore {
    summary_score(hyp_sents, ref_sents, |h, r| rouge_n(h, r, 1))
}

/// Fraction of distinct summary n-grams that never occur in the document
/// (n-grams do not cross sentence boundaries). Zero when the summary has no
/// n-grams.
pub fn novel_ngram_ratio(summary_sents: &[Vec<String>], document: &Document, n: usize) -> f64 {
    assert!(n >= 1, "n must be at least 1");
    let doc_grams: HashSet<&[String]> = document
        .sentences
        .iter()
        .flat_map(|s| s.windows(n))
        .collect();
    let summ_grams: HashSet<&[String]> = summary_sents.iter().flat_map(|s| s.windows(n)).collect();
    if summ_grams.is_empty() {
        return 0.0;
    }
    let novel = summ_grams.iter().filter(|g| !doc_grams.contains(*g)).count();
    novel as f64 / summ_grams.len() as f64
}

/// Light suffix stripper for evaluation-time ROUGE ("with stemming").
/// Strips one of a few common English suffixes while keeping a stem of at
/// least three characters.
pub fn stem(token: &str) -> String {
    const SUFFIXES: [&str; 8] = ["ingly", "edly", "ing", "ies", "ed", "ly", "es", "s"];
    for suf in SUFFIXES {
        if let Some(base) = token.strip_suffix(suf) {
            if base.chars().count() >= 3 {
                return if suf == "ies" { format!("{base}y") } else { base.to_string() };
            }
        }
    }
    token.to_string()
}

pub fn stem_all(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| stem(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn ngram_examples() {
        let c = ngram_counts(&t("a b a b"), 2);
        assert_eq!(c.len(), 2);
        assert_eq!(c[&t("a b")], 2);
        assert_eq!(c[&t("b a")], 1);
        assert!(ngram_counts(&t("a"), 2).is_empty());
        let u = ngram_counts(&t("x y x"), 1);
        assert_eq!(u[&t("x")], 2);
    }

    #[test]
    fn rouge_n_examples() {
        let s = rouge_n(&t("the cat"), &t("the cat"), 1);
        assert_eq!(s.f1, 1.0);
        let z = rouge_n(&t("a b"), &t("c d"), 1);
        assert_eq!(z, RougeScore::default());
        let p = rouge_n(&t("the cat sat"), &t("the cat"), 1);
        assert_eq!(p.recall, 1.0);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-15);
        // clipping: hyp repeats "a" three times, ref has it once
        let c = rouge_n(&t("a a a"), &t("a b"), 1);
        assert!((c.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.recall, 0.5);
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l(&t("a b c"), &t("a b c")).f1, 1.0);
        assert_eq!(lcs_len(&t("a b c d"), &t("a c b d")), 3);
        assert_eq!(rouge_l(&t("a b"), &Vec::<String>::new()), RougeScore::default());
        assert_eq!(rouge_l(&Vec::<String>::new(), &t("a")), RougeScore::default());
    }

    #[test]
    fn summary_level() {
        let refs = vec![t("a b"), t("c d")];
        assert_eq!(rouge_l_summary(&refs, &refs).f1, 1.0);
        assert_eq!(rouge_1_summary(&[], &refs).f1, 0.0);
        let hyp = vec![t("a x"), t("d")];
        assert_eq!(
            rouge_l_summary(&hyp, &refs),
            rouge_l(&t("a x d"), &t("a b c d"))
        );
    }

    #[test]
    fn novelty_examples() {
        let doc = Document::new("d", vec![t("the cat sat")]).unwrap();
        assert_eq!(novel_ngram_ratio(&[t("the cat")], &doc, 1), 0.0);
        assert_eq!(novel_ngram_ratio(&[t("dog runs")], &doc, 1), 1.0);
        assert!((novel_ngram_ratio(&[t("the dog sat")], &doc, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(novel_ngram_ratio(&[t("the")], &doc, 2), 0.0);
    }

    #[test]
    fn stemmer() {
        assert_eq!(stem("running"), "runn");
        assert_eq!(stem("cats"), "cat");
        assert_eq!(stem("parties"), "party");
        assert_eq!(stem("is"), "is");
        assert_eq!(stem("quickly"), "quick");
    }
}
