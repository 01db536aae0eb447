//! Proxy extraction labels: each summary sentence is matched to the single
//! document sentence with the highest ROUGE-L recall.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, SummaryPair};
use crate::error::{Error, Result};
use crate::metrics::rouge_l;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyLabels {
    pub id: String,
    #[serde(rename = "extract_indices")]
    pub indices: Vec<usize>,
}

/// `argmax_i ROUGE-L_recall(d_i, s_t)` per summary sentence, lowest index
/// on ties. Indices may repeat across summary sentences.
pub fn match_proxy_labels(pair: &SummaryPair) -> ProxyLabels {
    let doc = &pair.document.sentences;
    let indices = pair
        .summary
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (i, d) in doc.iter().enumerate() {
                let r = rouge_l(d, s).recall;
                if r > best_score {
                    best = i;
                    best_score = r;
                }
            }
            if best_score <= 0.0 {
                warn!(
                    "pair `{}`: summary sentence {t} overlaps no document sentence; labelled 0",
                    pair.id()
                );
            }
            best
        })
        .collect();
    ProxyLabels {
        id: pair.id().to_string(),
        indices,
    }
}

/// One `(document sentence, summary sentence)` training pair per summary
/// sentence.
pub fn build_abstractor_pairs(pair: &SummaryPair, labels: &ProxyLabels) -> Result<Vec<(Sentence, Sentence)>> {
    if labels.indices.len() != pair.summary.len() {
        return Err(Error::InvalidArgument(format!(
            "pair `{}`: {} labels for {} summary sentences",
            pair.id(),
            labels.indices.len(),
            pair.summary.len()
        )));
    }
    let n = pair.document.sentences.len();
    labels
        .indices
        .iter()
        .zip(&pair.summary)
        .map(|(&j, s)| {
            if j >= n {
                return Err(Error::LabelOutOfRange { index: j, len: n });
            }
            Ok((pair.document.sentences[j].clone(), s.clone()))
        })
        .collect()
}
