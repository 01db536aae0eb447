//! Rewriting throughput at several worker counts. Outputs are identical for
//! every worker count; only the wall time changes.

use summ::abstractor::{Abstractor, AbstractorConfig};
use summ::corpus::{build_vocab, generate_synthetic_corpus, Sentence, SynthConfig};
use summ::decoding::{benchmark, parallel_abstract};

fn main() -> summ::Result<()> {
    let pairs = generate_synthetic_corpus(&SynthConfig {
        n_docs: 20,
        vocab_size: 200,
        sents_per_doc: 8,
        salient_per_doc: 2,
        noise_rate: 0.2,
        seed: 1,
    })?;
    let vocab = build_vocab(&pairs, 1000)?;
    let abs = Abstractor::new(
        AbstractorConfig {
            vocab_size: vocab.len(),
            emb_dim: 32,
            hidden: 32,
        },
        1,
    );
    let sents: Vec<Sentence> = pairs.iter().flat_map(|p| p.document.sentences.clone()).take(64).collect();
    let one = parallel_abstract(&sents, &abs, &vocab, 1)?;
    let four = parallel_abstract(&sents, &abs, &vocab, 4)?;
    println!("identical outputs: {}", one == four);
    println!("{:>7} {:>10} {:>10}", "workers", "sents/sec", "words/sec");
    for r in benchmark(&sents, &abs, &vocab, &[1, 2, 4, 8])? {
        println!("{:>7} {:>10.1} {:>10.1}", r.workers, r.sentences_per_sec, r.words_per_sec);
    }
    Ok(())
}
