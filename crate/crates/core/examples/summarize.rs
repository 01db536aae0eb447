//! Summarizes documents with checkpoints from an experiment directory
//! (see the `run_experiment` example).
//!
//! ```sh
//! cargo run --example summarize -- /tmp/summ-desk 3
//! ```

use std::path::PathBuf;

use summ::corpus::load_pairs;
use summ::decoding::{SummarizeMode, Summarizer};
use summ::extractor::StopRule;
use summ::pipeline::models::{Loaded, KIND_ABSTRACTOR, KIND_RL};
use summ::pipeline::{Layout, RunConfig};

fn main() -> summ::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "summ-desk".into()).into();
    let n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let layout = Layout::new(&dir);
    let cfg = RunConfig::load(&layout.config())?;
    let abs_l = Loaded::read(&layout.ckpt(KIND_ABSTRACTOR), &[KIND_ABSTRACTOR], None, false)?;
    let ext = Loaded::read(&layout.ckpt(KIND_RL), &[KIND_RL], None, false)?.extractor()?;
    let abs = abs_l.abstractor()?;
    let test = load_pairs(&layout.data("test"))?;
    for mode in [SummarizeMode::ExtractOnly, SummarizeMode::Greedy, SummarizeMode::Rerank] {
        let s = Summarizer {
            extractor: &ext,
            abstractor: Some(&abs),
            vocab: &abs_l.vocab,
            mode,
            stop: StopRule::Eoe { cap: cfg.extract.cap },
            decode: cfg.decode,
            workers: cfg.workers,
        };
        println!("== {mode:?}");
        for p in test.iter().take(n) {
            let out = s.summarize(&p.document)?;
            println!("{} extracted {:?}", p.id(), out.extract_indices);
            for sent in &out.sentences {
                println!("  {}", sent.join(" "));
            }
        }
    }
    Ok(())
}
