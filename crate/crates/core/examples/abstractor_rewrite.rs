//! Trains the copy-attention abstractor on (extracted, summary) sentence
//! pairs and rewrites a few held-out sentences greedily.

use summ::corpus::{build_vocab, generate_synthetic_corpus, SynthConfig};
use summ::pipeline::experiment::{abstractor_examples, label_all, train_abstractor, MlJob};
use summ::pipeline::RunConfig;

fn main() -> summ::Result<()> {
    let pairs = generate_synthetic_corpus(&SynthConfig {
        n_docs: 300,
        vocab_size: 60,
        sents_per_doc: 6,
        salient_per_doc: 2,
        noise_rate: 0.0,
        seed: 9,
    })?;
    let (train, val) = pairs.split_at(260);
    let vocab = build_vocab(train, 1000)?;
    let tr = abstractor_examples(train, &label_all(train))?;
    let va = abstractor_examples(val, &label_all(val))?;

    let mut cfg = RunConfig::default();
    cfg.model.emb_dim = 24;
    cfg.model.hidden = 24;
    cfg.optim.max_epochs = 5;
    let abs = train_abstractor(&MlJob::from_config(&cfg, 1, 2), &vocab, &tr, &va)?;
    println!("best val loss {:.4}", abs.log.best_val);
    for (src, tgt) in va.iter().take(3) {
        println!("source    {}", src.join(" "));
        println!("reference {}", tgt.join(" "));
        println!("rewrite   {}\n", abs.model.rewrite(src, &vocab).join(" "));
    }
    Ok(())
}
