//! ML pretraining of the pointer-network extractor on proxy labels, then
//! greedy extraction with the stop action disabled.

use summ::corpus::{build_vocab, generate_synthetic_corpus, SynthConfig};
use summ::extractor::StopRule;
use summ::pipeline::experiment::{extraction_examples, label_all, train_extractor, MlJob};
use summ::pipeline::{Arch, RunConfig};

fn main() -> summ::Result<()> {
    let pairs = generate_synthetic_corpus(&SynthConfig {
        n_docs: 300,
        vocab_size: 60,
        sents_per_doc: 6,
        salient_per_doc: 2,
        noise_rate: 0.1,
        seed: 5,
    })?;
    let (train, val) = pairs.split_at(250);
    let vocab = build_vocab(train, 1000)?;
    let tr = extraction_examples(train, &label_all(train), &vocab)?;
    let va = extraction_examples(val, &label_all(val), &vocab)?;

    let mut cfg = RunConfig::default();
    cfg.model.emb_dim = 16;
    cfg.model.hidden = 16;
    cfg.model.conv_filters = 8;
    cfg.optim.max_epochs = 4;
    let job = MlJob::from_config(&cfg, 1, 2);
    for arch in [Arch::Rnn, Arch::Ff] {
        let trained = train_extractor(arch, &job, &vocab, &tr, &va)?;
        let (doc, labels) = &va[0];
        println!(
            "{arch:?}: best val loss {:.4}; doc 0 extracted {:?}, labels {labels:?}",
            trained.log.best_val,
            trained.model.extract(doc, StopRule::FixedK(labels.len()))
        );
    }
    Ok(())
}
