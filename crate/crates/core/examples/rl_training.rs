//! Actor-critic fine-tuning of an untrained extractor with identity rewrites.
//! The curve shows the mean reward and how often the agent stops by itself.

use summ::corpus::{build_vocab, generate_synthetic_corpus, SynthConfig};
use summ::extractor::{Extractor, ExtractorConfig};
use summ::rl::{train_rl, ActorCritic, RlConfig, RlExample};

fn main() -> summ::Result<()> {
    let pairs = generate_synthetic_corpus(&SynthConfig {
        n_docs: 200,
        vocab_size: 40,
        sents_per_doc: 5,
        salient_per_doc: 2,
        noise_rate: 0.0,
        seed: 11,
    })?;
    let vocab = build_vocab(&pairs, 1000)?;
    let examples: Vec<RlExample> = pairs.iter().map(|p| RlExample::build(p, &vocab, None)).collect();
    let (train, val) = examples.split_at(180);

    let actor = Extractor::new(
        ExtractorConfig {
            vocab_size: vocab.len(),
            emb_dim: 16,
            conv_filters: 8,
            hidden: 16,
        },
        1,
    );
    let cfg = RlConfig {
        updates: 150,
        batch_size: 16,
        log_every: 10,
        eval_every: 50,
        ..RlConfig::default()
    };
    let out = train_rl(ActorCritic::new(actor, 2), train, val, &cfg)?;
    for p in &out.curve {
        println!("step {:4}  reward {:.3}  eoe {:.2}", p.step, p.mean_reward, p.eoe_rate);
    }
    println!("best validation reward {:.4}", out.best_val_reward);
    Ok(())
}
