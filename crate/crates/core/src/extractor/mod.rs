//! Sentence extraction: hierarchical encoder, pointer-network policy and the
//! feed-forward baseline.

pub mod encoder;
pub mod ff;
pub mod pointer;

pub use encoder::{SentenceEncoder, SentenceReps};
pub use ff::{ff_ext_select, FfExtractor};
pub use pointer::{argmax, sample_index, DecoderState, Extraction, Extractor, ExtractorConfig, Mode, PointerMemory, StepOutput, StopRule, Trajectory};

/// Either extractor architecture, as used by the summarization pipeline.
#[derive(Debug, Clone)]
pub enum AnyExtractor {
    Rnn(Extractor),
    Ff(FfExtractor),
}

impl AnyExtractor {
    /// Selected sentence indices. The feed-forward model has no stop action
    /// and takes its top `k` (or `cap`) sentences in document order.
    pub fn extract(&self, doc: &[Vec<usize>], rule: StopRule) -> Vec<usize> {
        if doc.is_empty() {
            return Vec::new();
        }
        match self {
            AnyExtractor::Rnn(m) => m.extract(doc, rule).indices,
            AnyExtractor::Ff(m) => match rule {
                StopRule::FixedK(k) | StopRule::Eoe { cap: k } => m.select(doc, k.max(1)),
            },
        }
    }
}
